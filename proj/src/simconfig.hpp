#pragma once

// Simulation configuration in physical units (ms, px, s) and the results /
// metadata writers used by the `simulate` command.

#include "montecarlo.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace delaylab {

struct SimConfig {
    // Model, physical units.
    double max_speed_px_per_s = 220.0;
    double frame_rate_hz = 100.0;
    double u_current = 0.0;
    double delta_u_internal = 0.005;
    double delta_u_actual = 0.005;
    double sigma_u2_internal = 1e-4;
    double sigma_u2_actual = 1e-4;
    double sigma_x2_internal_px2 = 1.0;
    double sigma_x2_actual_px2 = 1.0;
    double sigma_y2_px2 = 1.0;
    double sigma_z2_px2 = 1.0;
    double sigma_p2_px2 = 400.0;
    double e_max_px = 200.0;
    std::optional<double> f_max; ///< absent: calibrate ("auto")

    // Grid.
    std::vector<double> delay_means_ms = {200, 400, 600, 800, 1000};
    std::vector<double> delay_vars_ms2 = {10, 1000};
    std::vector<bool> wand = {false, true};
    std::optional<double> grid_delta_u; ///< overrides both trends per cell

    int runs = kDefaultRuns;
    int samples = kDefaultSamples;
    std::uint64_t seed = 1;
    unsigned threads = 0; ///< 0: all hardware threads

    double calibration_percentile = 99.5;
    int calibration_samples = 100000;

    double ms_per_step() const { return 1000.0 / frame_rate_hz; }
    /// Model parameters in steps with `f_max` left at its nominal value.
    ModelParams model_params() const;
    std::vector<Condition> conditions() const;
    /// Longest, most variable delay without the wand.
    Condition calibration_condition() const;
    std::uint64_t calibration_seed() const;
};

void validate(const SimConfig &config);

/// Strict parse: unknown keys and wrong types are Error(validation) naming
/// the field path; malformed JSON is Error(parse) with line and column.
SimConfig sim_config_from_json_text(std::string_view text);
SimConfig load_sim_config(const std::filesystem::path &path);
nlohmann::json to_json(const SimConfig &config);

struct SimOutput {
    SimConfig config;
    double f_max = 0.0;
    std::string f_max_policy; ///< "auto" or "fixed"
    std::vector<RunResult> results;

    /// delay_mean_steps, delay_var_steps2, wand, delta_u, run, performance, soa
    std::string results_csv() const;
    /// Seed, F_max, parameter echo in physical and step units. No clock
    /// values, so identical inputs produce identical bytes.
    nlohmann::json metadata() const;
};

SimOutput run_simulation(const SimConfig &config);

/// Writes `path` and `path` + ".meta.json".
void write_simulation(const SimOutput &output, const std::filesystem::path &path);

} // namespace delaylab
