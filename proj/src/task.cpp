#include "task.hpp"

#include "errors.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

namespace delaylab {

using nlohmann::json;

// =============================================================================
// Course
// =============================================================================

long Course::frame_count() const { return std::lround(duration * kFrameRate); }

void validate(const Course &c) {
    if (c.course_id.empty())
        fail(Errc::validation, "course_id must not be empty");
    if (!(c.width > kObjectSize) || !std::isfinite(c.width))
        fail(Errc::validation, "course width must exceed the object size (30 px)");
    if (!(c.duration > 0.0) || !std::isfinite(c.duration))
        fail(Errc::validation, "course duration must be > 0");
    if (!(c.scroll_speed > 0.0) || !std::isfinite(c.scroll_speed))
        fail(Errc::validation, "scroll_speed must be > 0");
    if (!(c.screen_width > c.width) || !std::isfinite(c.screen_width))
        fail(Errc::validation, "screen_width must exceed the course width");
    for (const auto &s : c.components) {
        if (!std::isfinite(s.amplitude) || !std::isfinite(s.phase))
            fail(Errc::validation, "sine amplitude and phase must be finite");
        if (!(s.period > 0.0) || !std::isfinite(s.period))
            fail(Errc::validation, "sine period must be > 0");
    }
}

double course_center(const Course &c, double t) {
    if (!(t >= 0.0 && t <= c.duration))
        fail(Errc::domain, "course time " + format_double(t) + " s outside [0, " +
                               format_double(c.duration) + "]");
    double x = c.screen_center();
    for (const auto &s : c.components)
        x += s.amplitude * std::sin(2.0 * std::numbers::pi * t / s.period + s.phase);
    return x;
}

namespace {

double number_field(const json &obj, const char *key, const std::string &path) {
    const auto it = obj.find(key);
    if (it == obj.end())
        fail(Errc::validation, path + "." + key + " is required");
    if (!it->is_number())
        fail(Errc::validation, path + "." + key + " must be a number");
    return it->get<double>();
}

void reject_unknown(const json &obj, std::initializer_list<const char *> known, const std::string &path) {
    for (const auto &[key, _] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char *k) { return key == k; }))
            fail(Errc::validation, "unknown key " + path + "." + key);
    }
}

} // namespace

Course course_from_json(const json &doc) {
    if (!doc.is_object())
        fail(Errc::validation, "course document must be a JSON object");
    reject_unknown(doc, {"course_id", "components", "width", "scroll_speed", "duration", "screen_width"},
                   "course");
    Course c;
    if (!doc.contains("course_id") || !doc["course_id"].is_string())
        fail(Errc::validation, "course.course_id must be a string");
    c.course_id = doc["course_id"].get<std::string>();
    const auto comps = doc.find("components");
    if (comps == doc.end() || !comps->is_array() || comps->size() != 2)
        fail(Errc::validation, "course.components must be an array of exactly two sine terms");
    for (std::size_t i = 0; i < 2; ++i) {
        const auto &item = (*comps)[i];
        const std::string path = "course.components[" + std::to_string(i) + "]";
        if (!item.is_object())
            fail(Errc::validation, path + " must be an object");
        reject_unknown(item, {"amplitude", "period", "phase"}, path);
        c.components[i].amplitude = number_field(item, "amplitude", path);
        c.components[i].period = number_field(item, "period", path);
        c.components[i].phase = item.contains("phase") ? number_field(item, "phase", path) : 0.0;
    }
    if (doc.contains("width"))
        c.width = number_field(doc, "width", "course");
    if (doc.contains("scroll_speed"))
        c.scroll_speed = number_field(doc, "scroll_speed", "course");
    if (doc.contains("duration"))
        c.duration = number_field(doc, "duration", "course");
    if (doc.contains("screen_width"))
        c.screen_width = number_field(doc, "screen_width", "course");
    validate(c);
    return c;
}

json to_json(const Course &c) {
    json comps = json::array();
    for (const auto &s : c.components)
        comps.push_back({{"amplitude", s.amplitude}, {"period", s.period}, {"phase", s.phase}});
    return {{"course_id", c.course_id},   {"components", comps},
            {"width", c.width},           {"scroll_speed", c.scroll_speed},
            {"duration", c.duration},     {"screen_width", c.screen_width}};
}

std::vector<Course> default_courses() {
    auto make = [](const char *id, SineComponent a, SineComponent b) {
        Course c;
        c.course_id = id;
        c.components = {a, b};
        return c;
    };
    // Amplitudes scaled so that exact tracking needs a mean input change of
    // about 0.005 per frame with |u| < 1 throughout.
    return {
        make("course1", {86.0, 6.0, 0.0}, {27.0, 2.6, 1.3}),
        make("course2", {75.0, 5.0, 0.7}, {38.0, 3.1, 2.1}),
        make("course3", {88.0, 7.5, 2.4}, {20.0, 2.2, 0.4}),
    };
}

// =============================================================================
// Delay channel
// =============================================================================

void channel_push(DelayChannel &ch, long frame, double u, Rng &rng) {
    const double mean_frames = ch.config.mean_ms / 10.0;
    const double var_frames = ch.config.var_ms2 / 100.0;
    const double delay = std::max(0.0, rng.normal(mean_frames, var_frames));
    long arrival = frame + std::lround(delay);
    arrival = std::max(arrival, ch.last_arrival_frame);
    ch.pending.push_back({arrival, u});
    ch.last_arrival_frame = arrival;
    ++ch.pushed;
}

std::optional<double> channel_deliver(DelayChannel &ch, long frame) {
    std::optional<double> out;
    while (!ch.pending.empty() && ch.pending.front().arrival_frame <= frame) {
        out = ch.pending.front().u;
        ch.pending.pop_front();
        ++ch.delivered;
    }
    return out;
}

// =============================================================================
// Stepping and records
// =============================================================================

bool object_inside(const Course &c, double object_x, double center_x) {
    const double half_obj = 0.5 * kObjectSize;
    const double half_course = 0.5 * c.width;
    return object_x - half_obj >= center_x - half_course && object_x + half_obj <= center_x + half_course;
}

TaskState initial_state(const Course &c) {
    TaskState s;
    s.object_x = course_center(c, 0.0);
    return s;
}

FrameRecord step(TaskState &state, DelayChannel &channel, const Course &course, double raw_u) {
    if (auto u = channel_deliver(channel, state.frame))
        state.applied_u = *u;
    const double half_obj = 0.5 * kObjectSize;
    state.object_x = std::clamp(state.object_x + state.applied_u * kPxPerFrame, half_obj,
                                course.screen_width - half_obj);
    const double t = std::min(static_cast<double>(state.frame) / kFrameRate, course.duration);
    FrameRecord rec;
    rec.frame = state.frame;
    rec.raw_u = raw_u;
    rec.applied_u = state.applied_u;
    rec.object_x = state.object_x;
    rec.course_center_x = course_center(course, t);
    rec.inside = object_inside(course, rec.object_x, rec.course_center_x);
    ++state.frame;
    return rec;
}

std::optional<WandGeometry> wand_geometry(const TaskState &state, const Course &course,
                                          double delay_mean_ms, bool wand_enabled, double raw_u) {
    if (!wand_enabled)
        return std::nullopt;
    WandGeometry g;
    g.base_x = state.object_x;
    g.base_y = kObjectRow;
    g.tip_x = state.object_x + raw_u * kPxPerFrame * (delay_mean_ms / 10.0);
    g.tip_y = kObjectRow + course.scroll_speed * (delay_mean_ms / 1000.0);
    return g;
}

double score_run(std::span<const FrameRecord> frames) {
    if (frames.empty())
        fail(Errc::domain, "cannot score an empty frame log");
    const auto inside = std::count_if(frames.begin(), frames.end(), [](const FrameRecord &r) { return r.inside; });
    return 100.0 * static_cast<double>(inside) / static_cast<double>(frames.size());
}

void validate_frame_log(std::span<const FrameRecord> frames, const Course &course) {
    const long expected = course.frame_count();
    if (static_cast<long>(frames.size()) != expected)
        fail(Errc::validation, "frame log has " + std::to_string(frames.size()) + " records, expected " +
                                   std::to_string(expected) + " (" + format_double(course.duration) +
                                   " s at 100 fps)");
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto &r = frames[i];
        const std::string where = "frame record " + std::to_string(i);
        if (r.frame != static_cast<long>(i))
            fail(Errc::validation, where + " has frame " + std::to_string(r.frame));
        if (!(std::abs(r.raw_u) <= 1.0) || !(std::abs(r.applied_u) <= 1.0))
            fail(Errc::validation, where + ": inputs must lie in [-1, 1]");
        if (!std::isfinite(r.object_x) || !std::isfinite(r.course_center_x))
            fail(Errc::validation, where + ": positions must be finite");
    }
}

std::vector<FrameRecord> regrade(std::span<const FrameRecord> frames, const Course &course) {
    std::vector<FrameRecord> out(frames.begin(), frames.end());
    for (auto &r : out) {
        const double t = std::clamp(static_cast<double>(r.frame) / kFrameRate, 0.0, course.duration);
        r.course_center_x = course_center(course, t);
        r.inside = object_inside(course, r.object_x, r.course_center_x);
    }
    return out;
}

// =============================================================================
// Headless runs
// =============================================================================

std::vector<FrameRecord> run_task(const Course &course, const ChannelConfig &cfg, std::uint64_t channel_seed,
                                  const Controller &controller) {
    validate(course);
    Rng rng(channel_seed);
    DelayChannel channel{cfg, {}, 0, 0, 0};
    TaskState state = initial_state(course);
    const long n = course.frame_count();
    std::vector<FrameRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (long f = 0; f < n; ++f) {
        const double u = std::clamp(controller({f, state.object_x, &course, cfg.mean_ms}), -1.0, 1.0);
        channel_push(channel, f, u, rng);
        out.push_back(step(state, channel, course, u));
    }
    return out;
}

std::vector<FrameRecord> replay(const Course &course, const ChannelConfig &cfg, std::uint64_t channel_seed,
                                std::span<const double> raw_inputs) {
    validate(course);
    Rng rng(channel_seed);
    DelayChannel channel{cfg, {}, 0, 0, 0};
    TaskState state = initial_state(course);
    std::vector<FrameRecord> out;
    out.reserve(raw_inputs.size());
    for (std::size_t f = 0; f < raw_inputs.size(); ++f) {
        const double u = raw_inputs[f];
        if (!(std::abs(u) <= 1.0))
            fail(Errc::validation, "input at frame " + std::to_string(f) + " outside [-1, 1]");
        channel_push(channel, static_cast<long>(f), u, rng);
        out.push_back(step(state, channel, course, u));
    }
    return out;
}

Controller lookahead_controller(double gain, std::uint64_t noise_seed, double noise_sd, bool compensate) {
    // Smith-predictor style: the controller remembers what it sent during the
    // last mean delay and aims where the object will be once that arrives.
    struct Memory {
        std::deque<double> sent;
        double drift = 0.0;
        Rng noise;
        explicit Memory(std::uint64_t seed) : noise(seed) {}
    };
    auto mem = std::make_shared<Memory>(noise_seed);
    constexpr double kDriftPole = 0.99;
    return [mem, gain, noise_sd, compensate](const ControllerView &v) {
        const auto lag = static_cast<std::size_t>(std::max(0L, std::lround(v.delay_mean_ms / 10.0)));
        double in_flight = 0.0;
        if (compensate)
            for (double u : mem->sent)
                in_flight += u * kPxPerFrame;
        const double predicted_x = v.object_x + in_flight;
        const double t = std::min(static_cast<double>(v.frame + static_cast<long>(lag) + 1) / kFrameRate,
                                  v.course->duration);
        const double target = course_center(*v.course, t);
        double u = gain * (target - predicted_x) / kPxPerFrame;
        if (noise_sd > 0.0) {
            mem->drift = kDriftPole * mem->drift +
                         noise_sd * std::sqrt(1.0 - kDriftPole * kDriftPole) * mem->noise.normal();
            u += mem->drift;
        }
        u = std::clamp(u, -1.0, 1.0);
        mem->sent.push_back(u);
        while (mem->sent.size() > lag)
            mem->sent.pop_front();
        return u;
    };
}

std::vector<FrameRecord> perfect_tracking_log(const Course &course) {
    // Zero-delay channel and a controller that lands exactly on the centre.
    const Controller exact = [](const ControllerView &v) {
        const double t = std::min(static_cast<double>(v.frame) / kFrameRate, v.course->duration);
        return (course_center(*v.course, t) - v.object_x) / kPxPerFrame;
    };
    return run_task(course, {0.0, 0.0}, 0, exact);
}

// =============================================================================
// JSONL
// =============================================================================

std::string frames_to_jsonl(std::span<const FrameRecord> frames) {
    std::string out;
    out.reserve(frames.size() * 120);
    for (const auto &r : frames) {
        out += "{\"frame\":";
        out += std::to_string(r.frame);
        out += ",\"raw_u\":";
        out += format_double(r.raw_u);
        out += ",\"applied_u\":";
        out += format_double(r.applied_u);
        out += ",\"object_x\":";
        out += format_double(r.object_x);
        out += ",\"course_center_x\":";
        out += format_double(r.course_center_x);
        out += ",\"inside\":";
        out += r.inside ? "true" : "false";
        out += "}\n";
    }
    return out;
}

std::vector<FrameRecord> frames_from_jsonl(std::string_view text) {
    std::vector<FrameRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos)
            continue;
        const std::string where = "frame log line " + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error &e) {
            fail(Errc::parse, where + ": " + e.what());
        }
        if (!obj.is_object())
            fail(Errc::parse, where + ": expected a JSON object");
        // Extra keys (e.g. input device) are tolerated; the six fields are required.
        auto num = [&](const char *key) {
            const auto it = obj.find(key);
            if (it == obj.end() || !it->is_number())
                fail(Errc::parse, where + ": '" + key + "' must be a number");
            return it->get<double>();
        };
        FrameRecord r;
        const auto fr = obj.find("frame");
        if (fr == obj.end() || !fr->is_number_integer())
            fail(Errc::parse, where + ": 'frame' must be an integer");
        r.frame = fr->get<long>();
        r.raw_u = num("raw_u");
        r.applied_u = num("applied_u");
        r.object_x = num("object_x");
        r.course_center_x = num("course_center_x");
        const auto in = obj.find("inside");
        if (in == obj.end() || !in->is_boolean())
            fail(Errc::parse, where + ": 'inside' must be a boolean");
        r.inside = in->get<bool>();
        out.push_back(r);
    }
    return out;
}

} // namespace delaylab
