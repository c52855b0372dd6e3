#pragma once

// Delayed continuous operation model.
//
// One horizontal state axis, time in steps (1 step = 1 frame = 10 ms). Real
// world quantities carry an `_actual` suffix, the operator's internal model
// an `_internal` suffix. All Monte Carlo samplers treat each call as an
// independent steady-state episode: the estimated-state variance is fixed at
// the observation noise variance instead of being tracked recursively.

#include "rng.hpp"

#include <span>

namespace delaylab {

// =============================================================================
// Domain types
// =============================================================================

struct GaussianBelief {
    double mean = 0.0; ///< px
    double var = 0.0;  ///< px^2, never negative
};

/// Prediction horizon relative to the perceived delay d: the state d steps
/// ahead (what the operator plans against) or d + 1 steps ahead (what the
/// next observation is compared with).
enum class Horizon { at_delay, after_delay };

/// Defaults are the simulation parameter set used throughout the project.
struct ModelParams {
    double b_u = 2.2;               ///< px per step at |u| = 1
    double u_current = 0.0;         ///< current input, [-1, 1]
    double delta_u_internal = 0.005; ///< perceived input change per step
    double delta_u_actual = 0.005;   ///< actual input change per step
    double sigma_u2_internal = 1e-4; ///< recollect noise variance
    double sigma_u2_actual = 1e-4;   ///< input approximation noise variance
    double sigma_x2_internal = 1.0;  ///< px^2
    double sigma_x2_actual = 1.0;    ///< px^2
    double sigma_y2 = 1.0;           ///< observation noise, px^2
    double sigma_z2 = 1.0;           ///< wand observation noise, px^2
    double sigma_p2 = 400.0;         ///< uncertainty of predicting from the wand, px^2
    double e_max = 200.0;            ///< allowable operation error, px
    /// SoA normalisation constant (nats). Simulations normally replace this
    /// with a calibrated value; see `calibrate_f_max`.
    double f_max = 8.0;
};

/// Gaussian delay distributions in steps / steps^2.
struct DelaySpec {
    double mean_actual = 0.0;
    double mean_internal = 0.0;
    double var_actual = 0.0;
    double var_internal = 0.0;

    /// Same distribution for the real delay and the perceived delay.
    static DelaySpec same(double mean, double var) { return {mean, mean, var, var}; }
};

struct DelayDraw {
    long d_actual = 0;
    long d_perceived = 0;
};

struct ErrorSample {
    double prediction_error = 0.0; ///< px
    double operation_error = 0.0;  ///< px
    double free_energy = 0.0;      ///< nats
};

struct FreeEnergyInputs {
    double delta = 0.0; ///< prediction error, px
    double s_p = 0.0;   ///< prediction uncertainty, px^2
    double s_l = 0.0;   ///< system noise, px^2
};

/// Throws Error(invalid_argument) naming the offending field.
void validate(const ModelParams &params);
void validate(const DelaySpec &spec);

// =============================================================================
// Delays and prediction
// =============================================================================

/// Independent Gaussian draws, rounded to the nearest step and clamped at 0.
/// Draw order: actual, then perceived.
DelayDraw draw_delays(const DelaySpec &spec, Rng &rng);

/// Predicted state after recalling the last d inputs with a linearised input
/// trend:
///   mean = mu + b_u h u + b_u d(d+1)/2 du
///   var  = s2 + b_u^2 d(d+1)/2 su2 + h sx2,   h = d or d + 1
GaussianBelief prediction_distribution(const ModelParams &params, GaussianBelief current,
                                       long d_perceived, Horizon horizon);

/// Prediction variance at the update step without the wand, with the
/// estimated-state variance replaced by the observation noise variance.
double update_variance(const ModelParams &params, long d_perceived);

/// Prediction variance at the update step when predicting from the wand.
double wand_update_variance(const ModelParams &params);

/// Kalman gain for a prior variance fused with observation noise variance.
double kalman_gain(double prior_var, double obs_var);

GaussianBelief kalman_update(GaussianBelief prior, double observation, double sigma_y2);

// =============================================================================
// Error samplers (no wand)
// =============================================================================

/// Deterministic part of the operation error: the real trajectory over the
/// actual delay minus the operator's plan over the perceived delay.
/// Equals b_u (D - d)(u + (D + d + 1)/2 du) when both trends agree.
double delay_mismatch(const ModelParams &params, DelayDraw draw);

/// Noise aggregates entering the prediction error, each already drawn from
/// its summed Gaussian (px, or input units for `input`).
struct PredictionNoise {
    double input = 0.0;      ///< sum of D+1 input approximation terms
    double transition = 0.0; ///< sum of D+1 actual transition terms
    double obs_next = 0.0;   ///< observation noise at t+d+1
    double obs_now = 0.0;    ///< observation noise at t
};

struct OperationNoise {
    double input_actual = 0.0;        ///< sum of D+1 input approximation terms
    double recollect = 0.0;           ///< double sum of d(d+1)/2 recollect terms
    double transition_actual = 0.0;   ///< sum of D+1 actual transition terms
    double transition_internal = 0.0; ///< sum of d internal transition terms
    double obs = 0.0;                 ///< observation noise at t (enters twice)
};

/// Gain applied to the prediction error: var / (var + sy2) with var from
/// `update_variance`.
double prediction_gain(const ModelParams &params, long d_perceived);

/// Prediction error (estimated actual minus predicted state) after the
/// Kalman update, for given noise aggregates.
double prediction_error(const ModelParams &params, DelayDraw draw, const PredictionNoise &noise);
double operation_error(const ModelParams &params, DelayDraw draw, const OperationNoise &noise);

/// Draws the aggregates in declaration order of `PredictionNoise`.
PredictionNoise draw_prediction_noise(const ModelParams &params, DelayDraw draw, Rng &rng);
OperationNoise draw_operation_noise(const ModelParams &params, DelayDraw draw, Rng &rng);

double sample_prediction_error(const ModelParams &params, DelayDraw draw, Rng &rng);
double sample_operation_error(const ModelParams &params, DelayDraw draw, Rng &rng);

// =============================================================================
// Free energy and aggregate measures
// =============================================================================

/// F = (delta^2 / (s_p + s_l) + ln(2 pi (s_p + s_l))) / 2
double free_energy(const FreeEnergyInputs &inputs);

/// Percentage of |e| <= e_max (inclusive).
double task_performance(std::span<const double> errors, double e_max);

/// Mean of clamp((f_max - F) / f_max, 0, 1), times 100.
double soa_percentage(std::span<const double> f_samples, double f_max);

// =============================================================================
// Predictive Wand
// =============================================================================

/// Pointed position: x + b_u d_bar u.
double wand_tip(double x_actual, double u, double b_u, double d_bar_actual);

/// Prediction read off the wand. At the delay horizon the belief is centred
/// on the tip with variance sz2 + sp2; one step later the operator adds one
/// more input step and the transition noise.
GaussianBelief wand_prediction(const ModelParams &params, double x_actual, double u,
                               double d_bar_actual, Horizon horizon);

/// Deterministic part of both wand errors. The perceived delay does not enter.
double wand_mismatch(const ModelParams &params, long d_actual, double d_bar_actual);

struct WandPredictionNoise {
    double input = 0.0;      ///< sum of D+1 input approximation terms
    double transition = 0.0; ///< sum of D+1 actual transition terms
    double obs = 0.0;        ///< observation noise at t+d+1
};

struct WandOperationNoise {
    double input = 0.0;      ///< sum of D+1 input approximation terms
    double transition = 0.0; ///< sum of D+1 actual transition terms
    double wand_obs = 0.0;   ///< wand observation noise (enters twice)
    double wand_pred = 0.0;  ///< wand prediction noise
};

double wand_prediction_gain(const ModelParams &params);

double wand_prediction_error(const ModelParams &params, DelayDraw draw, double d_bar_actual,
                             const WandPredictionNoise &noise);
double wand_operation_error(const ModelParams &params, DelayDraw draw, double d_bar_actual,
                            const WandOperationNoise &noise);

WandPredictionNoise draw_wand_prediction_noise(const ModelParams &params, DelayDraw draw, Rng &rng);
WandOperationNoise draw_wand_operation_noise(const ModelParams &params, DelayDraw draw, Rng &rng);

double sample_wand_prediction_error(const ModelParams &params, DelayDraw draw,
                                    double d_bar_actual, Rng &rng);
/// Recollect noise does not enter the wand operation error.
double sample_wand_operation_error(const ModelParams &params, DelayDraw draw,
                                   double d_bar_actual, Rng &rng);

} // namespace delaylab
