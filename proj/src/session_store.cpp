#include "session_store.hpp"

#include "errors.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <unistd.h>

namespace delaylab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string frames_name(int set_index, const char *kind) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "set_%02d.%s.jsonl", set_index, kind);
    return buf;
}

bool same_record(const FrameRecord &a, const FrameRecord &b) {
    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(y)); };
    return a.frame == b.frame && a.inside == b.inside && close(a.raw_u, b.raw_u) &&
           close(a.applied_u, b.applied_u) && close(a.object_x, b.object_x) &&
           close(a.course_center_x, b.course_center_x);
}

void append_line_durable(const fs::path &path, const std::string &line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0)
        fail(Errc::io, "cannot open " + path.string() + " for appending");
    std::string buf = line + "\n";
    const char *p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
        const ssize_t n = ::write(fd, p, left);
        if (n <= 0) {
            ::close(fd);
            fail(Errc::io, "write to " + path.string() + " failed");
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

std::string flag(bool b) { return b ? "1" : "0"; }

} // namespace

bool valid_label(std::string_view label) {
    if (label.empty() || label.size() > 64)
        return false;
    return std::all_of(label.begin(), label.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == '-' || c == '.';
    }) && label != "." && label != "..";
}

std::string session_id_for(const CreateRequest &r) {
    const std::string key =
        r.study + '\x1f' + r.participant_id + '\x1f' + std::to_string(r.participant_index) + '\x1f' +
        std::to_string(r.seed);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
    return r.participant_id + "-" + hex;
}

const std::vector<std::string> &SessionStore::export_columns() {
    static const std::vector<std::string> cols = {
        "study",         "participant_id", "participant_index", "session_id", "set_index", "block",
        "practice",      "nondelayed",     "excluded",          "delay_mean_ms", "delay_var_ms2", "wand",
        "course_id",     "score",          "q1",                "q2",         "counterbalance", "rated_at"};
    return cols;
}

// =============================================================================
// Construction and loading
// =============================================================================

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_ / "sessions", ec);
    if (!ec)
        fs::create_directories(root_ / "courses", ec);
    if (ec)
        fail(Errc::io, "cannot create data directory " + root_.string() + ": " + ec.message());
    const fs::path probe = root_ / ".write_probe";
    write_file_atomic(probe, "ok");
    fs::remove(probe, ec);

    for (const auto &course : default_courses()) {
        const fs::path file = root_ / "courses" / (course.course_id + ".json");
        if (!fs::exists(file))
            write_file_atomic(file, to_json(course).dump(2) + "\n");
    }
    for (const auto &item : fs::directory_iterator(root_ / "courses")) {
        if (item.path().extension() != ".json")
            continue;
        const std::string text = read_file(item.path());
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error &e) {
            fail(Errc::parse, item.path().string() + ": " + describe_offset(text, e.byte) + ": " + e.what());
        }
        Course c = course_from_json(doc);
        courses_[c.course_id] = c;
    }
}

const Course &SessionStore::course(const std::string &course_id) const {
    const auto it = courses_.find(course_id);
    if (it == courses_.end())
        fail(Errc::not_found, "unknown course " + course_id);
    return it->second;
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string &id) {
    std::lock_guard lock(map_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end())
        return it->second;
    auto e = load(id);
    sessions_[id] = e;
    return e;
}

std::shared_ptr<SessionStore::Entry> SessionStore::load(const std::string &id) {
    if (!valid_label(id))
        fail(Errc::not_found, "unknown session " + id);
    const fs::path dir = root_ / "sessions" / id;
    const fs::path log = dir / "events.jsonl";
    if (!fs::exists(log))
        fail(Errc::not_found, "unknown session " + id);
    const std::string text = read_file(log);

    auto e = std::make_shared<Entry>();
    SessionInfo &info = e->info;
    info.session_id = id;
    bool created = false;
    std::size_t pos = 0, line_no = 0, good_end = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        const bool torn = end == std::string::npos;
        if (torn)
            end = text.size();
        const std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.empty())
            continue;
        json ev;
        try {
            ev = json::parse(line);
        } catch (const json::parse_error &) {
            if (torn)
                break; // interrupted append: the event never happened
            fail(Errc::io, log.string() + ": corrupt event on line " + std::to_string(line_no));
        }
        good_end = torn ? text.size() : pos;
        const std::string kind = ev.value("event", "");
        if (kind == "created") {
            info.study = ev.at("study").get<std::string>();
            info.created_at = ev.at("at").get<std::string>();
            info.plan = build_plan(ev.at("participant_id").get<std::string>(),
                                   ev.at("participant_index").get<int>(), ev.at("seed").get<std::uint64_t>());
            info.results.assign(info.plan.sets.size(), SetResult{});
            created = true;
        } else if (!created) {
            fail(Errc::io, log.string() + ": event before session creation");
        } else if (kind == "frames") {
            auto &r = info.results.at(ev.at("set").get<std::size_t>());
            r.score = ev.at("score").get<double>();
            r.mismatches = ev.value("mismatches", 0);
            r.frames_at = ev.at("at").get<std::string>();
        } else if (kind == "rating") {
            const int set = ev.at("set").get<int>();
            info.results.at(static_cast<std::size_t>(set)).rating =
                RatingRecord{set, ev.at("q1").get<int>(), ev.at("q2").get<int>(), ev.at("at").get<std::string>()};
        } else {
            fail(Errc::io, log.string() + ": unknown event '" + kind + "' on line " + std::to_string(line_no));
        }
    }
    if (!created)
        fail(Errc::io, log.string() + ": no creation event");
    if (good_end < text.size()) {
        // Drop the torn tail so later appends start on a fresh line.
        write_file_atomic(log, std::string_view(text).substr(0, good_end));
        write_snapshot(info);
    }
    return e;
}

void SessionStore::append_event(const SessionInfo &info, const json &event) {
    append_line_durable(root_ / "sessions" / info.session_id / "events.jsonl", event.dump());
}

void SessionStore::write_snapshot(const SessionInfo &info) {
    json sets = json::array();
    for (std::size_t i = 0; i < info.results.size(); ++i) {
        const auto &r = info.results[i];
        json s = {{"index", i}, {"complete", r.complete()}};
        if (r.score)
            s["score"] = *r.score;
        if (r.rating)
            s["rating"] = {{"q1", r.rating->q1_control}, {"q2", r.rating->q2_desired}};
        sets.push_back(s);
    }
    json doc = {{"session_id", info.session_id}, {"study", info.study}, {"created_at", info.created_at},
                {"plan", to_json(info.plan)},    {"sets", sets}};
    write_file_atomic(root_ / "sessions" / info.session_id / "state.json", doc.dump(2) + "\n");
}

// =============================================================================
// Sessions
// =============================================================================

SessionInfo SessionStore::create(const CreateRequest &req) {
    if (!valid_label(req.participant_id))
        fail(Errc::validation, "participant_id must be 1-64 characters of [A-Za-z0-9_.-]");
    if (!valid_label(req.study))
        fail(Errc::validation, "study must be 1-64 characters of [A-Za-z0-9_.-]");
    if (req.participant_index < 0)
        fail(Errc::validation, "participant_index must be >= 0");
    const std::string id = session_id_for(req);
    const fs::path dir = root_ / "sessions" / id;

    std::lock_guard lock(map_mutex_);
    if (auto it = sessions_.find(id); it != sessions_.end()) {
        std::lock_guard inner(it->second->mutex);
        return it->second->info;
    }
    if (fs::exists(dir / "events.jsonl")) {
        auto e = load(id);
        sessions_[id] = e;
        return e->info;
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());

    auto e = std::make_shared<Entry>();
    SessionInfo &info = e->info;
    info.session_id = id;
    info.study = req.study;
    info.created_at = utc_timestamp();
    info.plan = build_plan(req.participant_id, req.participant_index, req.seed);
    info.results.assign(info.plan.sets.size(), SetResult{});
    append_event(info, {{"event", "created"},
                        {"at", info.created_at},
                        {"study", req.study},
                        {"participant_id", req.participant_id},
                        {"participant_index", req.participant_index},
                        {"seed", req.seed}});
    write_snapshot(info);
    sessions_[id] = e;
    return info;
}

SessionInfo SessionStore::get(const std::string &id) {
    auto e = entry(id);
    std::lock_guard lock(e->mutex);
    return e->info;
}

std::vector<std::string> SessionStore::list_sessions() {
    std::vector<std::string> out;
    for (const auto &item : fs::directory_iterator(root_ / "sessions"))
        if (item.is_directory() && fs::exists(item.path() / "events.jsonl"))
            out.push_back(item.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

int first_incomplete(const SessionInfo &info) {
    for (std::size_t i = 0; i < info.results.size(); ++i)
        if (!info.results[i].complete())
            return static_cast<int>(i);
    return static_cast<int>(info.results.size());
}

void require_active(const SessionInfo &info, int set_index) {
    const int n = static_cast<int>(info.results.size());
    if (set_index < 0 || set_index >= n)
        fail(Errc::sequence, "set " + std::to_string(set_index) + " does not exist");
    const int active = first_incomplete(info);
    if (set_index != active)
        fail(Errc::sequence, "set " + std::to_string(set_index) + " is not the active set (" +
                                 (active == n ? std::string("session complete") : "active is " + std::to_string(active)) +
                                 ")");
}

} // namespace

NextSet SessionStore::next_set(const std::string &id) {
    auto e = entry(id);
    std::lock_guard lock(e->mutex);
    const int active = first_incomplete(e->info);
    if (active == static_cast<int>(e->info.results.size()))
        return {true, std::nullopt};
    return {false, e->info.plan.sets[static_cast<std::size_t>(active)]};
}

double SessionStore::record_frames(const std::string &id, int set_index, std::string_view jsonl) {
    auto e = entry(id);
    std::lock_guard lock(e->mutex);
    SessionInfo &info = e->info;
    require_active(info, set_index);
    const SetSpec &spec = info.plan.sets[static_cast<std::size_t>(set_index)];
    const Course &crs = course(spec.course_id);

    const auto submitted = frames_from_jsonl(jsonl);
    validate_frame_log(submitted, crs);
    std::vector<double> raw(submitted.size());
    std::transform(submitted.begin(), submitted.end(), raw.begin(), [](const FrameRecord &r) { return r.raw_u; });
    const auto replayed = replay(crs, spec.condition.channel(), spec.channel_seed, raw);
    const double score = score_run(replayed);

    SetResult &res = info.results[static_cast<std::size_t>(set_index)];
    const fs::path dir = root_ / "sessions" / id;
    if (res.score) {
        // A retried submission of the same inputs is harmless.
        if (replayed == frames_from_jsonl(read_file(dir / frames_name(set_index, "frames"))))
            return *res.score;
        fail(Errc::sequence, "frames for set " + std::to_string(set_index) + " are already recorded");
    }
    int mismatches = 0;
    for (std::size_t i = 0; i < replayed.size(); ++i)
        mismatches += !same_record(submitted[i], replayed[i]);

    write_file_atomic(dir / frames_name(set_index, "submitted"), jsonl);
    write_file_atomic(dir / frames_name(set_index, "frames"), frames_to_jsonl(replayed));
    const std::string at = utc_timestamp();
    append_event(info, {{"event", "frames"}, {"at", at}, {"set", set_index}, {"score", score},
                        {"mismatches", mismatches}});
    res.score = score;
    res.mismatches = mismatches;
    res.frames_at = at;
    write_snapshot(info);
    return score;
}

RatingRecord SessionStore::record_rating(const std::string &id, int set_index, int q1, int q2) {
    auto e = entry(id);
    std::lock_guard lock(e->mutex);
    SessionInfo &info = e->info;
    if (q1 < 0 || q1 > 100 || q2 < 0 || q2 > 100)
        fail(Errc::validation, "ratings must be integers in [0, 100]");
    if (set_index >= 0 && set_index < static_cast<int>(info.results.size())) {
        const auto &prev = info.results[static_cast<std::size_t>(set_index)].rating;
        if (prev && prev->q1_control == q1 && prev->q2_desired == q2)
            return *prev;
    }
    require_active(info, set_index);
    SetResult &res = info.results[static_cast<std::size_t>(set_index)];
    if (!res.score)
        fail(Errc::sequence, "set " + std::to_string(set_index) + " needs its frame log before the rating");
    RatingRecord rec{set_index, q1, q2, utc_timestamp()};
    append_event(info, {{"event", "rating"}, {"at", rec.timestamp}, {"set", set_index}, {"q1", q1}, {"q2", q2}});
    res.rating = rec;
    write_snapshot(info);
    return rec;
}

double SessionStore::record_set(const std::string &id, int set_index, std::string_view jsonl, int q1, int q2) {
    if (q1 < 0 || q1 > 100 || q2 < 0 || q2 > 100)
        fail(Errc::validation, "ratings must be integers in [0, 100]");
    const double score = record_frames(id, set_index, jsonl);
    record_rating(id, set_index, q1, q2);
    return score;
}

std::vector<FrameRecord> SessionStore::stored_frames(const std::string &id, int set_index) {
    auto e = entry(id);
    std::lock_guard lock(e->mutex);
    if (set_index < 0 || set_index >= static_cast<int>(e->info.results.size()) ||
        !e->info.results[static_cast<std::size_t>(set_index)].score)
        fail(Errc::not_found, "no frames stored for set " + std::to_string(set_index));
    return frames_from_jsonl(read_file(root_ / "sessions" / id / frames_name(set_index, "frames")));
}

// =============================================================================
// Export
// =============================================================================

void SessionStore::export_rows(const SessionInfo &info, Table &out) {
    for (std::size_t i = 0; i < info.results.size(); ++i) {
        const auto &r = info.results[i];
        if (!r.complete())
            continue;
        const auto &s = info.plan.sets[i];
        const bool excluded = s.practice || s.condition.nondelayed;
        out.rows.push_back({info.study,
                            info.plan.participant_id,
                            std::to_string(info.plan.participant_index),
                            info.session_id,
                            std::to_string(s.index),
                            block_name(s.block),
                            flag(s.practice),
                            flag(s.condition.nondelayed),
                            flag(excluded),
                            format_double(s.condition.delay_mean_ms),
                            format_double(s.condition.delay_var_ms2),
                            flag(s.condition.wand),
                            s.course_id,
                            format_double(*r.score),
                            std::to_string(r.rating->q1_control),
                            std::to_string(r.rating->q2_desired),
                            kCounterbalanceScheme,
                            r.rating->timestamp});
    }
}

namespace {

void require_measured(const Table &t, const std::string &what) {
    const std::size_t practice = *t.column("practice");
    if (std::none_of(t.rows.begin(), t.rows.end(), [&](const auto &row) { return row[practice] == "0"; }))
        fail(Errc::domain, what + " has no recorded measured set");
}

} // namespace

Table SessionStore::export_session(const std::string &id) {
    auto e = entry(id);
    Table t{export_columns(), {}};
    {
        std::lock_guard lock(e->mutex);
        export_rows(e->info, t);
    }
    require_measured(t, "session " + id);
    return t;
}

Table SessionStore::export_study(const std::string &study) {
    std::vector<SessionInfo> infos;
    for (const auto &id : list_sessions()) {
        auto e = entry(id);
        std::lock_guard lock(e->mutex);
        if (e->info.study == study)
            infos.push_back(e->info);
    }
    if (infos.empty())
        fail(Errc::domain, "study " + study + " has no sessions");
    std::stable_sort(infos.begin(), infos.end(), [](const SessionInfo &a, const SessionInfo &b) {
        return a.plan.participant_index < b.plan.participant_index;
    });
    Table t{export_columns(), {}};
    for (const auto &info : infos)
        export_rows(info, t);
    require_measured(t, "study " + study);
    return t;
}

} // namespace delaylab
