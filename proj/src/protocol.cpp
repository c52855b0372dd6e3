#include "protocol.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <algorithm>
#include <map>

namespace delaylab {

using nlohmann::json;

namespace {

constexpr std::uint64_t kJsSafeMask = (std::uint64_t{1} << 53) - 1;

constexpr double kDelays[] = {200.0, 400.0, 800.0};
constexpr double kVariances[] = {10.0, 1000.0};

} // namespace

std::vector<SetCondition> block_a_conditions() {
    std::vector<SetCondition> out;
    for (double var : kVariances)
        for (double mean : kDelays)
            out.push_back({mean, var, false, false});
    out.push_back({0.0, 0.0, false, true});
    return out;
}

std::vector<SetCondition> block_b_conditions() {
    std::vector<SetCondition> out;
    for (bool wand : {false, true})
        for (double var : kVariances)
            for (double mean : kDelays)
                out.push_back({mean, var, wand, false});
    return out;
}

std::vector<int> williams_row(int n, int row) {
    if (n <= 0 || row < 0)
        fail(Errc::invalid_argument, "williams_row needs n > 0 and row >= 0");
    // First row 0, 1, n-1, 2, n-2, ...; row r adds r modulo n.
    std::vector<int> first(n);
    for (int j = 0, lo = 1, hi = n - 1; j < n; ++j) {
        if (j == 0)
            first[j] = 0;
        else if (j % 2 == 1)
            first[j] = lo++;
        else
            first[j] = hi--;
    }
    const int rows = (n % 2 == 0) ? n : 2 * n;
    const int r = row % rows;
    std::vector<int> out(n);
    for (int j = 0; j < n; ++j)
        out[j] = (first[j] + r) % n;
    if (r >= n)
        std::reverse(out.begin(), out.end());
    return out;
}

SessionPlan build_plan(const std::string &participant_id, int participant_index, std::uint64_t seed,
                       const std::vector<std::string> &course_ids) {
    if (participant_index < 0)
        fail(Errc::invalid_argument, "participant_index must be >= 0");
    if (course_ids.size() != 3)
        fail(Errc::invalid_argument, "the protocol uses exactly three courses");
    const int p = participant_index;
    const auto a_conds = block_a_conditions();
    const auto b_conds = block_b_conditions();
    const int n_a = static_cast<int>(a_conds.size());
    const int n_courses = static_cast<int>(course_ids.size());

    SessionPlan plan{participant_id, participant_index, seed, {}};
    auto add = [&](Block block, bool practice, const SetCondition &cond, int course) {
        SetSpec s;
        s.index = static_cast<int>(plan.sets.size());
        s.block = block;
        s.practice = practice;
        s.condition = cond;
        s.course_id = course_ids[static_cast<std::size_t>(course)];
        s.channel_seed = derive_seed(seed, {static_cast<std::uint64_t>(s.index)}) & kJsSafeMask;
        plan.sets.push_back(s);
    };

    for (int j = 0; j < kBlockAPractice; ++j)
        add(Block::A, true, a_conds[static_cast<std::size_t>((j + p) % n_a)], j % n_courses);
    // Measured Block A items are (condition, course) pairs, counterbalanced jointly.
    const int items_a = n_a * n_courses;
    for (int item : williams_row(items_a, p))
        add(Block::A, false, a_conds[static_cast<std::size_t>(item / n_courses)], item % n_courses);

    const int n_b = static_cast<int>(b_conds.size());
    for (int j = 0; j < kBlockBPractice; ++j)
        add(Block::B, true, b_conds[static_cast<std::size_t>((p + j * (n_b / 2)) % n_b)], (p + j) % n_courses);
    for (int c : williams_row(n_b, p))
        add(Block::B, false, b_conds[static_cast<std::size_t>(c)], (c + p) % n_courses);
    return plan;
}

void validate_plan(const SessionPlan &plan) {
    if (plan.sets.size() != kPlanSets)
        fail(Errc::validation, "plan must have 42 sets");
    std::map<std::pair<int, std::string>, int> a_pairs;
    std::map<int, int> b_conds;
    const auto a_list = block_a_conditions();
    const auto b_list = block_b_conditions();
    int practice = 0;
    for (std::size_t i = 0; i < plan.sets.size(); ++i) {
        const auto &s = plan.sets[i];
        if (s.index != static_cast<int>(i))
            fail(Errc::validation, "set indices must be consecutive");
        const bool in_a = static_cast<int>(i) < kBlockASets;
        if ((s.block == Block::A) != in_a)
            fail(Errc::validation, "set " + std::to_string(i) + " is in the wrong block");
        const bool should_practice =
            in_a ? static_cast<int>(i) < kBlockAPractice : static_cast<int>(i) < kBlockASets + kBlockBPractice;
        if (s.practice != should_practice)
            fail(Errc::validation, "set " + std::to_string(i) + " has the wrong practice flag");
        if (s.practice)
            ++practice;
        if (s.block == Block::A && s.condition.wand)
            fail(Errc::validation, "Block A sets never enable the wand");
        if (s.condition.nondelayed && s.condition.wand)
            fail(Errc::validation, "nondelayed sets have the wand off");
        if (s.channel_seed > kJsSafeMask)
            fail(Errc::validation, "channel seed exceeds 53 bits");
        if (s.practice)
            continue;
        if (s.block == Block::A) {
            const auto it = std::find(a_list.begin(), a_list.end(), s.condition);
            if (it == a_list.end())
                fail(Errc::validation, "unknown Block A condition in set " + std::to_string(i));
            ++a_pairs[{static_cast<int>(it - a_list.begin()), s.course_id}];
        } else {
            const auto it = std::find(b_list.begin(), b_list.end(), s.condition);
            if (it == b_list.end())
                fail(Errc::validation, "unknown Block B condition in set " + std::to_string(i));
            ++b_conds[static_cast<int>(it - b_list.begin())];
        }
    }
    if (practice != kBlockAPractice + kBlockBPractice)
        fail(Errc::validation, "plan must have 9 practice sets");
    if (a_pairs.size() != 21 || std::any_of(a_pairs.begin(), a_pairs.end(), [](auto &kv) { return kv.second != 1; }))
        fail(Errc::validation, "Block A must cover 7 conditions x 3 courses exactly once");
    if (b_conds.size() != 12 || std::any_of(b_conds.begin(), b_conds.end(), [](auto &kv) { return kv.second != 1; }))
        fail(Errc::validation, "Block B must cover its 12 conditions exactly once");
}

const char *block_name(Block b) { return b == Block::A ? "A" : "B"; }

json to_json(const SetSpec &s) {
    return {{"index", s.index},
            {"block", block_name(s.block)},
            {"practice", s.practice},
            {"condition",
             {{"delay_mean_ms", s.condition.delay_mean_ms},
              {"delay_var_ms2", s.condition.delay_var_ms2},
              {"wand", s.condition.wand},
              {"nondelayed", s.condition.nondelayed}}},
            {"course_id", s.course_id},
            {"channel_seed", s.channel_seed}};
}

json plan_summary(const SessionPlan &plan) {
    int practice = 0, a = 0, b = 0;
    for (const auto &s : plan.sets) {
        practice += s.practice;
        (s.block == Block::A ? a : b) += 1;
    }
    return {{"sets", plan.sets.size()},
            {"practice", practice},
            {"measured", static_cast<int>(plan.sets.size()) - practice},
            {"block_a", a},
            {"block_b", b},
            {"counterbalance", kCounterbalanceScheme}};
}

json to_json(const SessionPlan &plan) {
    json sets = json::array();
    for (const auto &s : plan.sets)
        sets.push_back(to_json(s));
    return {{"participant_id", plan.participant_id},
            {"participant_index", plan.participant_index},
            {"seed", plan.seed},
            {"counterbalance", kCounterbalanceScheme},
            {"sets", sets}};
}

json resetting_config() {
    return {{"task", "frame_capture"}, {"frame_color", "yellow"}, {"captures", 3}, {"delay_ms", 0}};
}

} // namespace delaylab
