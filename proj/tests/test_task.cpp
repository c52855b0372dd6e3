#include "errors.hpp"
#include "task.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace delaylab;

namespace {

Course flat_course() {
    Course c;
    c.course_id = "flat";
    c.components = {SineComponent{0.0, 1.0, 0.0}, SineComponent{0.0, 1.0, 0.0}};
    return c;
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::vector<double> inputs_of(const std::vector<FrameRecord> &frames) {
    std::vector<double> u;
    for (const auto &f : frames)
        u.push_back(f.raw_u);
    return u;
}

} // namespace

// =============================================================================
// Course
// =============================================================================

TEST(Course, CenterExamples) {
    Course c = flat_course();
    EXPECT_EQ(course_center(c, 0.0), 960.0);
    EXPECT_EQ(course_center(c, 17.3), 960.0);
    c.components = {SineComponent{50.0, 10.0, 0.0}, SineComponent{0.0, 1.0, 0.0}};
    EXPECT_NEAR(course_center(c, 2.5), 960.0 + 50.0, 1e-12);
    c.components = {SineComponent{50.0, 10.0, 0.0}, SineComponent{30.0, 3.0, 0.0}};
    EXPECT_EQ(course_center(c, 0.0), 960.0);
}

TEST(Course, TimeOutsideRunIsDomainError) {
    const Course c = flat_course();
    try {
        course_center(c, 45.01);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::domain);
    }
    EXPECT_THROW(course_center(c, -0.01), Error);
}

TEST(Course, Validation) {
    Course c = flat_course();
    c.width = 30.0;
    EXPECT_THROW(validate(c), Error);
    c = flat_course();
    c.duration = 0.0;
    EXPECT_THROW(validate(c), Error);
    c = flat_course();
    c.components[1].period = 0.0;
    EXPECT_THROW(validate(c), Error);
    EXPECT_EQ(flat_course().frame_count(), 4500);
}

TEST(Course, JsonRoundTripAndStrictness) {
    for (const auto &c : default_courses()) {
        const Course back = course_from_json(to_json(c));
        EXPECT_EQ(to_json(back), to_json(c));
    }
    auto doc = to_json(default_courses()[0]);
    doc["colour"] = "white";
    EXPECT_THROW(course_from_json(doc), Error);
    doc = to_json(default_courses()[0]);
    doc["components"].erase(1);
    EXPECT_THROW(course_from_json(doc), Error);
    doc = to_json(default_courses()[0]);
    doc["components"][0].erase("phase");
    EXPECT_EQ(course_from_json(doc).components[0].phase, 0.0);
    doc["components"][0]["amplitude"] = "big";
    EXPECT_THROW(course_from_json(doc), Error);
}

TEST(Course, DefaultsNeedAboutPointZeroZeroFiveInputChangePerFrame) {
    const auto courses = default_courses();
    ASSERT_EQ(courses.size(), 3u);
    for (const auto &c : courses) {
        // Exact tracking input between frames: velocity / 2.2 px.
        double sum = 0.0, prev = 0.0, max_u = 0.0;
        const long n = c.frame_count();
        for (long f = 0; f < n; ++f) {
            const double u = (course_center(c, (f + 1) / 100.0) - course_center(c, f / 100.0)) / kPxPerFrame;
            if (f > 0)
                sum += std::abs(u - prev);
            prev = u;
            max_u = std::max(max_u, std::abs(u));
        }
        EXPECT_NEAR(sum / static_cast<double>(n - 1), 0.005, 0.005 * 0.05) << c.course_id;
        EXPECT_LT(max_u, 1.0) << c.course_id;
    }
}

// =============================================================================
// Channel
// =============================================================================

TEST(Channel, FixedDelayArrivesExactly) {
    DelayChannel ch{{200.0, 0.0}, {}, 0, 0, 0};
    Rng rng(1);
    for (long f = 0; f < 50; ++f)
        channel_push(ch, f, 0.01 * f, rng);
    for (std::size_t i = 0; i < ch.pending.size(); ++i)
        EXPECT_EQ(ch.pending[i].arrival_frame, static_cast<long>(i) + 20);
}

TEST(Channel, ZeroDelayPassesThrough) {
    DelayChannel ch{{0.0, 0.0}, {}, 0, 0, 0};
    Rng rng(1);
    channel_push(ch, 7, 0.5, rng);
    EXPECT_EQ(ch.pending.front().arrival_frame, 7);
    EXPECT_EQ(channel_deliver(ch, 7), 0.5);
}

TEST(Channel, EmpiricalDelayMatchesClampedGaussian) {
    DelayChannel ch{{200.0, 1000.0}, {}, 0, 0, 0};
    Rng rng(42);
    const int n = 100000;
    // Independent sends far apart so monotone clamping never binds.
    double sum = 0.0;
    long prev_arrival = -1;
    for (int i = 0; i < n; ++i) {
        const long frame = 1000L * i;
        channel_push(ch, frame, 0.0, rng);
        const long arrival = ch.pending.back().arrival_frame;
        ASSERT_GE(arrival, prev_arrival);
        prev_arrival = arrival;
        sum += 10.0 * static_cast<double>(arrival - frame);
        ch.pending.clear();
    }
    // The clamp at 0 is ~6 SD away for these parameters; mean ~ 200 ms.
    const double mu = 20.0, sd = std::sqrt(10.0);
    const double oracle_frames = mu * normal_cdf(mu / sd) + sd * normal_pdf(mu / sd);
    EXPECT_NEAR(sum / n, 10.0 * oracle_frames, 2.0);
    EXPECT_NEAR(sum / n, 200.0, 2.0);
}

TEST(Channel, LastDeliveredWins) {
    DelayChannel ch{{0.0, 0.0}, {}, 0, 0, 0};
    ch.pending = {{5, 0.1}, {5, 0.2}, {5, 0.3}, {6, 0.4}};
    ch.last_arrival_frame = 6;
    EXPECT_FALSE(channel_deliver(ch, 4).has_value());
    EXPECT_EQ(channel_deliver(ch, 5), 0.3);
    EXPECT_EQ(ch.delivered, 3u);
    EXPECT_EQ(channel_deliver(ch, 9), 0.4);
}

TEST(ChannelProperty, ConservationAndFifo) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        DelayChannel ch{{400.0, 1000.0}, {}, 0, 0, 0};
        Rng rng(seed);
        std::vector<double> pushed, delivered_last;
        long frame = 0;
        for (; frame < 2000; ++frame) {
            const double u = static_cast<double>(frame) / 2000.0;
            channel_push(ch, frame, u, rng);
            pushed.push_back(u);
            const std::size_t before = ch.delivered;
            if (auto v = channel_deliver(ch, frame)) {
                ASSERT_GT(ch.delivered, before);
                delivered_last.push_back(*v);
            }
        }
        while (!ch.pending.empty())
            if (auto v = channel_deliver(ch, frame++))
                delivered_last.push_back(*v);
        EXPECT_EQ(ch.pushed, ch.delivered);
        EXPECT_EQ(ch.pushed, pushed.size());
        // Inputs increase with send time, so push order means increasing values.
        for (std::size_t i = 1; i < delivered_last.size(); ++i)
            ASSERT_GT(delivered_last[i], delivered_last[i - 1]);
    }
}

// =============================================================================
// Stepping
// =============================================================================

TEST(Step, FullInputMoves220PxIn100Frames) {
    const Course c = flat_course();
    TaskState s = initial_state(c);
    DelayChannel ch{{0.0, 0.0}, {}, 0, 0, 0};
    Rng rng(1);
    const double x0 = s.object_x;
    for (long f = 0; f < 100; ++f) {
        channel_push(ch, f, 1.0, rng);
        step(s, ch, c, 1.0);
    }
    EXPECT_NEAR(s.object_x - x0, 220.0, 1e-9);
    EXPECT_EQ(s.frame, 100);
}

TEST(Step, IdleObjectIsStationaryAndInsideFollowsCourse) {
    Course c = flat_course();
    c.components[0] = {100.0, 4.0, 0.0};
    const auto frames = run_task(c, {200.0, 10.0}, 3, [](const ControllerView &) { return 0.0; });
    for (const auto &r : frames) {
        EXPECT_EQ(r.object_x, 960.0);
        EXPECT_EQ(r.inside, std::abs(r.course_center_x - 960.0) <= 85.0);
    }
}

TEST(Step, ClampedToScreen) {
    Course c = flat_course();
    TaskState s = initial_state(c);
    DelayChannel ch{{0.0, 0.0}, {}, 0, 0, 0};
    Rng rng(1);
    for (long f = 0; f < 1000; ++f) {
        channel_push(ch, f, -1.0, rng);
        step(s, ch, c, -1.0);
    }
    EXPECT_EQ(s.object_x, 15.0);
}

TEST(Step, InsideUsesFullObjectExtent) {
    const Course c = flat_course();
    EXPECT_TRUE(object_inside(c, 960.0 + 85.0, 960.0));
    EXPECT_FALSE(object_inside(c, 960.0 + 85.01, 960.0));
    EXPECT_TRUE(object_inside(c, 960.0 - 85.0, 960.0));
    EXPECT_FALSE(object_inside(c, 960.0 - 86.0, 960.0));
}

TEST(Wand, GeometryExamples) {
    const Course c = flat_course();
    TaskState s;
    s.object_x = 500.0;
    EXPECT_FALSE(wand_geometry(s, c, 800.0, false, 1.0).has_value());
    auto g = wand_geometry(s, c, 800.0, true, 1.0);
    ASSERT_TRUE(g.has_value());
    EXPECT_NEAR(g->tip_x - g->base_x, 176.0, 1e-9);
    EXPECT_NEAR(g->tip_y - g->base_y, 160.0, 1e-9);
    EXPECT_EQ(g->base_y, 350.0);
    EXPECT_EQ(g->dot_radius, 5.0);
    g = wand_geometry(s, c, 200.0, true, -0.5);
    EXPECT_NEAR(g->tip_x - g->base_x, -22.0, 1e-9);
    g = wand_geometry(s, c, 400.0, true, 0.0);
    EXPECT_EQ(g->tip_x, 500.0);
}

// =============================================================================
// Scoring
// =============================================================================

TEST(Score, Examples) {
    std::vector<FrameRecord> frames(10);
    for (auto &f : frames)
        f.inside = true;
    EXPECT_EQ(score_run(frames), 100.0);
    for (std::size_t i = 0; i < 5; ++i)
        frames[i].inside = false;
    EXPECT_EQ(score_run(frames), 50.0);
    EXPECT_THROW(score_run(std::vector<FrameRecord>{}), Error);
}

TEST(Score, PerfectTrackingScoresFullMarks) {
    for (const auto &c : default_courses()) {
        const auto log = perfect_tracking_log(c);
        EXPECT_EQ(log.size(), 4500u);
        EXPECT_EQ(score_run(log), 100.0) << c.course_id;
        for (const auto &r : log)
            ASSERT_NEAR(r.object_x, r.course_center_x, 1e-9);
    }
}

TEST(ScoreProperty, OneOutsideFrameCostsExactlyOneNth) {
    for (std::size_t n : {1u, 7u, 100u, 4500u}) {
        std::vector<FrameRecord> frames(n);
        for (auto &f : frames)
            f.inside = true;
        frames.push_back(FrameRecord{});
        const double expected = 100.0 * static_cast<double>(n) / static_cast<double>(n + 1);
        EXPECT_NEAR(100.0 - score_run(frames), 100.0 / static_cast<double>(n + 1), 1e-9);
        EXPECT_NEAR(score_run(frames), expected, 1e-12);
    }
}

TEST(FrameLog, ValidationAndRegrade) {
    const Course c = default_courses()[1];
    auto log = perfect_tracking_log(c);
    EXPECT_NO_THROW(validate_frame_log(log, c));
    auto truncated = log;
    truncated.pop_back();
    EXPECT_THROW(validate_frame_log(truncated, c), Error);
    auto renumbered = log;
    renumbered[10].frame = 11;
    EXPECT_THROW(validate_frame_log(renumbered, c), Error);
    auto wild = log;
    wild[3].raw_u = 1.5;
    EXPECT_THROW(validate_frame_log(wild, c), Error);

    // Tampered inside flags are recomputed from positions.
    auto tampered = log;
    for (auto &r : tampered) {
        r.inside = false;
        r.course_center_x = 0.0;
    }
    EXPECT_EQ(regrade(tampered, c), log);
}

// =============================================================================
// Runs and replay
// =============================================================================

TEST(Run, ZeroDelayMatchesDirectSimulation) {
    const Course c = default_courses()[0];
    const Controller ctl = lookahead_controller(0.3, 5, 0.4, false);
    const auto frames = run_task(c, {0.0, 0.0}, 99, ctl);
    // No-channel simulation: the input applies in the same frame.
    double x = course_center(c, 0.0);
    for (const auto &r : frames) {
        x = std::clamp(x + r.raw_u * kPxPerFrame, 15.0, c.screen_width - 15.0);
        ASSERT_EQ(r.applied_u, r.raw_u);
        ASSERT_EQ(r.object_x, x);
    }
}

TEST(Run, ReplayReproducesBitForBit) {
    for (const auto &c : default_courses()) {
        for (std::uint64_t seed : {1ULL, 777ULL, (1ULL << 53) - 1}) {
            const ChannelConfig cfg{400.0, 1000.0};
            const auto frames = run_task(c, cfg, seed, lookahead_controller(0.2, seed, 0.5, false));
            const auto again = replay(c, cfg, seed, inputs_of(frames));
            ASSERT_EQ(frames, again);
            EXPECT_EQ(score_run(frames), score_run(again));
            EXPECT_EQ(replay(c, cfg, seed, inputs_of(frames)), again);
        }
    }
}

TEST(Run, DifferentSeedUsuallyDiffers) {
    const Course c = default_courses()[2];
    const ChannelConfig cfg{400.0, 1000.0};
    const auto a = run_task(c, cfg, 1, lookahead_controller(0.2));
    const auto b = replay(c, cfg, 2, inputs_of(a));
    EXPECT_NE(a, b);
}

TEST(RunProperty, SpeedBound) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto frames =
            run_task(default_courses()[seed % 3], {800.0, 1000.0}, seed, lookahead_controller(0.5, seed, 1.0, false));
        double prev = course_center(default_courses()[seed % 3], 0.0);
        for (const auto &r : frames) {
            ASSERT_LE(std::abs(r.object_x - prev), kPxPerFrame + 1e-12);
            ASSERT_LE(std::abs(r.raw_u), 1.0);
            prev = r.object_x;
        }
    }
}

TEST(Run, ReplayRejectsOutOfRangeInput) {
    std::vector<double> u(10, 0.0);
    u[4] = 1.2;
    EXPECT_THROW(replay(flat_course(), {}, 1, u), Error);
}

TEST(Run, CompensatingControllerTracksWell) {
    const auto frames = run_task(default_courses()[0], {800.0, 10.0}, 3, lookahead_controller(0.2));
    EXPECT_GT(score_run(frames), 95.0);
}

// =============================================================================
// JSONL
// =============================================================================

TEST(Jsonl, RoundTripIsExact) {
    const auto frames =
        run_task(default_courses()[1], {400.0, 1000.0}, 8, lookahead_controller(0.25, 3, 0.5, false));
    const std::string text = frames_to_jsonl(frames);
    EXPECT_EQ(frames_from_jsonl(text), frames);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4500);
}

TEST(Jsonl, FieldNamesAndExtras) {
    const auto parsed = frames_from_jsonl(
        "{\"frame\":0,\"raw_u\":0.5,\"applied_u\":0,\"object_x\":960,\"course_center_x\":961.5,\"inside\":true,"
        "\"device\":\"keyboard\"}\n\n");
    ASSERT_EQ(parsed.size(), 1u);
    EXPECT_EQ(parsed[0].raw_u, 0.5);
    EXPECT_TRUE(parsed[0].inside);
}

TEST(Jsonl, ErrorsCarryLineNumber) {
    const std::string good = frames_to_jsonl(perfect_tracking_log(flat_course())).substr(0, 200);
    const std::string first = good.substr(0, good.find('\n') + 1);
    auto expect_parse_error = [](const std::string &text, const std::string &needle) {
        try {
            frames_from_jsonl(text);
            FAIL() << "no error";
        } catch (const Error &e) {
            EXPECT_EQ(e.code(), Errc::parse);
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    expect_parse_error(first + "{not json}\n", "line 2");
    expect_parse_error(first + first + "[1,2]\n", "line 3");
    expect_parse_error("{\"frame\":0,\"raw_u\":0,\"applied_u\":0,\"object_x\":1,\"course_center_x\":1}\n",
                       "inside");
    expect_parse_error("{\"frame\":0.5,\"raw_u\":0,\"applied_u\":0,\"object_x\":1,\"course_center_x\":1,"
                       "\"inside\":true}\n",
                       "frame");
}
