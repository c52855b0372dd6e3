#pragma once

#include "model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace delaylab {

/// One cell of the simulation grid. Delays in steps / steps^2.
struct Condition {
    double delay_mean = 20.0;
    double delay_var = 0.1;
    bool wand = false;
    /// Input change per step applied to both the real and the internal trend.
    /// When absent the model parameters' own values are used.
    std::optional<double> delta_u;

    bool operator==(const Condition &) const = default;
};

struct RunResult {
    Condition condition;
    int run_index = 0;
    double performance = 0.0; ///< %
    double soa = 0.0;         ///< %
    int n_samples = 0;
};

struct ConditionSummary {
    Condition condition;
    int runs = 0;
    double performance_mean = 0.0;
    std::optional<double> performance_se; ///< absent with fewer than two runs
    double soa_mean = 0.0;
    std::optional<double> soa_se;
};

using GridSummary = std::vector<ConditionSummary>;

constexpr int kDefaultSamples = 5000;
constexpr int kDefaultRuns = 25;

/// Delay means {20..100} x variances {0.1, 10} x wand {off, on}: 20 cells in
/// wand-major, then variance, then delay order.
std::vector<Condition> default_grid(double delta_u = 0.005);

/// Parameters with the condition's input-trend override applied.
ModelParams params_for(const ModelParams &params, const Condition &condition);

/// One independent episode: delays, operation error, prediction error and
/// its free energy, in that draw order.
ErrorSample sample_episode(const ModelParams &params, const Condition &condition, Rng &rng);

RunResult run_condition(const Condition &condition, const ModelParams &params, int n_samples, Rng &rng,
                        int run_index = 0);

/// Child seed for (condition index, run index).
std::uint64_t run_seed(std::uint64_t master_seed, std::size_t condition_index, std::size_t run_index);

/// Results ordered by condition, then run. Identical for any thread count.
std::vector<RunResult> run_grid(const std::vector<Condition> &conditions, const ModelParams &params,
                                int runs, int n_samples, std::uint64_t master_seed,
                                unsigned threads = 1);

GridSummary summarize(const std::vector<RunResult> &results);

/// Percentile (linear interpolation between order statistics) of the free
/// energy over `n_samples` episodes of `condition`.
double calibrate_f_max(const ModelParams &params, const Condition &condition, int n_samples,
                       std::uint64_t seed, double percentile = 99.5);

/// Sample mean and standard error (stdev / sqrt(n)); SE absent for n < 2.
struct MeanSe {
    double mean = 0.0;
    std::optional<double> se;
};
MeanSe mean_se(const std::vector<double> &values);

} // namespace delaylab
