#pragma once

// Experiment protocol: 42 sets in two blocks with practice sets and
// counterbalanced condition order.

#include "task.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace delaylab {

enum class Block { A, B };

struct SetCondition {
    double delay_mean_ms = 0.0;
    double delay_var_ms2 = 0.0;
    bool wand = false;
    bool nondelayed = false;

    bool operator==(const SetCondition &) const = default;
    ChannelConfig channel() const { return {delay_mean_ms, delay_var_ms2}; }
};

struct SetSpec {
    int index = 0;
    Block block = Block::A;
    bool practice = false;
    SetCondition condition;
    std::string course_id;
    std::uint64_t channel_seed = 0; ///< < 2^53, exact in a JS number

    bool operator==(const SetSpec &) const = default;
};

struct SessionPlan {
    std::string participant_id;
    int participant_index = 0;
    std::uint64_t seed = 0;
    std::vector<SetSpec> sets;
};

constexpr int kPlanSets = 42;
constexpr int kBlockASets = 28;
constexpr int kBlockAPractice = 7;
constexpr int kBlockBPractice = 2;
constexpr const char *kCounterbalanceScheme = "williams-latin-square";

/// 200/400/800 ms x 10/1000 ms^2, then the nondelayed condition (7).
std::vector<SetCondition> block_a_conditions();
/// 200/400/800 ms x 10/1000 ms^2 x wand off/on (12).
std::vector<SetCondition> block_b_conditions();

/// Row `row` of a Williams design for `n` treatments: every treatment
/// appears once per position over n rows (2n rows for odd n, where the
/// second half are the reversed rows) and first-order carryover is balanced.
std::vector<int> williams_row(int n, int row);

/// Deterministic in (participant_id, participant_index, seed).
/// Block A: 7 practice sets (one per condition), then all 21
/// condition x course pairs. Block B: 2 practice sets, then the 12 wand
/// conditions, course chosen by rotation.
SessionPlan build_plan(const std::string &participant_id, int participant_index, std::uint64_t seed,
                       const std::vector<std::string> &course_ids = {"course1", "course2", "course3"});

/// Throws Error(validation) describing the first violated plan invariant.
void validate_plan(const SessionPlan &plan);

const char *block_name(Block b);

nlohmann::json to_json(const SetSpec &set);
nlohmann::json to_json(const SessionPlan &plan);
/// Block counts and scheme name.
nlohmann::json plan_summary(const SessionPlan &plan);

/// Zero-delay yellow-frame capture warm-up run before every set.
nlohmann::json resetting_config();

} // namespace delaylab
