#pragma once

// Headless course-following task: a scrolling two-sine course, a Gaussian
// delay channel between input and object, the wand overlay and scoring.
// Logic runs at a fixed 100 frames per second.

#include "rng.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace delaylab {

constexpr int kFrameRate = 100;            ///< logic ticks per second
constexpr double kPxPerFrame = 2.2;        ///< object speed at |u| = 1 (220 px/s)
constexpr double kObjectSize = 30.0;       ///< px, square side
constexpr double kObjectRow = 350.0;       ///< px above the lower screen edge
constexpr double kWandDotRadius = 5.0;     ///< px

// =============================================================================
// Course
// =============================================================================

struct SineComponent {
    double amplitude = 0.0; ///< px
    double period = 1.0;    ///< s
    double phase = 0.0;     ///< rad
};

struct Course {
    std::string course_id = "course";
    std::array<SineComponent, 2> components{};
    double width = 200.0;        ///< px
    double scroll_speed = 200.0; ///< px/s
    double duration = 45.0;      ///< s
    double screen_width = 1920.0; ///< px

    double screen_center() const { return 0.5 * screen_width; }
    /// Logic frames in one run (duration x 100).
    long frame_count() const;
};

void validate(const Course &course);

/// Horizontal course centre at the object's row, t seconds into the run:
/// the part of the course that has scrolled down to the object by then.
double course_center(const Course &course, double t);

/// Strict: unknown keys and missing components are errors.
Course course_from_json(const nlohmann::json &doc);
nlohmann::json to_json(const Course &course);

/// Three courses whose perfect-tracking input changes by about 0.005 per
/// frame on average.
std::vector<Course> default_courses();

// =============================================================================
// Delay channel
// =============================================================================

struct ChannelConfig {
    double mean_ms = 0.0;
    double var_ms2 = 0.0;
};

struct PendingInput {
    long arrival_frame = 0;
    double u = 0.0;
};

struct DelayChannel {
    ChannelConfig config;
    std::deque<PendingInput> pending; ///< arrival frames non-decreasing
    long last_arrival_frame = 0;
    std::size_t pushed = 0;
    std::size_t delivered = 0;
};

/// Queue `u` sent at `frame`. The delay is one Gaussian draw in frames,
/// clamped at zero and rounded; the arrival is then raised to the previous
/// arrival so inputs never overtake each other.
void channel_push(DelayChannel &channel, long frame, double u, Rng &rng);

/// Pops every input with arrival <= frame; the last one popped wins.
std::optional<double> channel_deliver(DelayChannel &channel, long frame);

// =============================================================================
// Stepping and records
// =============================================================================

struct TaskState {
    long frame = 0;
    double object_x = 0.0;
    double applied_u = 0.0;
};

struct FrameRecord {
    long frame = 0;
    double raw_u = 0.0;
    double applied_u = 0.0;
    double object_x = 0.0;
    double course_center_x = 0.0;
    bool inside = false;

    bool operator==(const FrameRecord &) const = default;
};

/// Object fully inside the course (edges inclusive).
bool object_inside(const Course &course, double object_x, double center_x);

TaskState initial_state(const Course &course);

/// Delivers due inputs, moves the object by applied_u x 2.2 px, clamps it to
/// the screen, evaluates inside-ness and advances one frame. `raw_u` is only
/// logged; it must already have been pushed into the channel.
FrameRecord step(TaskState &state, DelayChannel &channel, const Course &course, double raw_u);

struct WandGeometry {
    double base_x = 0.0;
    double base_y = 0.0;
    double tip_x = 0.0;
    double tip_y = 0.0;
    double dot_radius = kWandDotRadius;
};

/// Wand from the object towards the oncoming course. Absent when disabled.
/// Vertical extent scroll_speed x delay mean, horizontal extent
/// raw_u x 2.2 px/frame x delay mean in frames. y grows upwards.
std::optional<WandGeometry> wand_geometry(const TaskState &state, const Course &course,
                                          double delay_mean_ms, bool wand_enabled, double raw_u);

/// 100 x inside frames / all frames.
double score_run(std::span<const FrameRecord> frames);

/// Exactly course.frame_count() records numbered 0..N-1 with inputs in
/// [-1, 1]. Throws Error(validation).
void validate_frame_log(std::span<const FrameRecord> frames, const Course &course);

/// Recompute `course_center_x` and `inside` from each record's object_x.
std::vector<FrameRecord> regrade(std::span<const FrameRecord> frames, const Course &course);

// =============================================================================
// Headless runs
// =============================================================================

struct ControllerView {
    long frame = 0;
    double object_x = 0.0;
    const Course *course = nullptr;
    double delay_mean_ms = 0.0;
};

using Controller = std::function<double(const ControllerView &)>;

/// Full run: each frame asks the controller for raw_u, pushes it and steps.
std::vector<FrameRecord> run_task(const Course &course, const ChannelConfig &channel,
                                  std::uint64_t channel_seed, const Controller &controller);

/// Replays logged raw inputs through a fresh channel with the given seed.
std::vector<FrameRecord> replay(const Course &course, const ChannelConfig &channel,
                                std::uint64_t channel_seed, std::span<const double> raw_inputs);

/// Aims at the course centre `delay_mean` ahead. With `compensate` it also
/// accounts for its own inputs still in flight. Hand noise is a slow AR(1)
/// drift with stationary SD `noise_sd`, drawn from its own stream.
Controller lookahead_controller(double gain, std::uint64_t noise_seed = 0, double noise_sd = 0.0,
                                bool compensate = true);

/// Log where the object sits exactly on the course centre every frame.
std::vector<FrameRecord> perfect_tracking_log(const Course &course);

std::string frames_to_jsonl(std::span<const FrameRecord> frames);
/// Errors carry the 1-based line number.
std::vector<FrameRecord> frames_from_jsonl(std::string_view text);

} // namespace delaylab
