#include "model.hpp"

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace delaylab {

namespace {

void require_non_negative(double v, const char *field) {
    if (!(v >= 0.0) || !std::isfinite(v))
        fail(Errc::invalid_argument, std::string(field) + " must be a finite value >= 0");
}

void require_positive(double v, const char *field) {
    if (!(v > 0.0) || !std::isfinite(v))
        fail(Errc::invalid_argument, std::string(field) + " must be a finite value > 0");
}

// Number of terms in the recollect double sum over k = 1..d, l = 1..k.
double triangular(long d) { return 0.5 * static_cast<double>(d) * static_cast<double>(d + 1); }

} // namespace

void validate(const ModelParams &p) {
    if (!std::isfinite(p.b_u))
        fail(Errc::invalid_argument, "b_u must be finite");
    if (!(std::abs(p.u_current) <= 1.0))
        fail(Errc::invalid_argument, "u_current must lie in [-1, 1]");
    if (!std::isfinite(p.delta_u_internal) || !std::isfinite(p.delta_u_actual))
        fail(Errc::invalid_argument, "delta_u must be finite");
    require_non_negative(p.sigma_u2_internal, "sigma_u2_internal");
    require_non_negative(p.sigma_u2_actual, "sigma_u2_actual");
    require_non_negative(p.sigma_x2_internal, "sigma_x2_internal");
    require_non_negative(p.sigma_x2_actual, "sigma_x2_actual");
    require_non_negative(p.sigma_y2, "sigma_y2");
    require_non_negative(p.sigma_z2, "sigma_z2");
    require_non_negative(p.sigma_p2, "sigma_p2");
    require_positive(p.e_max, "e_max");
    require_positive(p.f_max, "f_max");
}

void validate(const DelaySpec &s) {
    require_non_negative(s.mean_actual, "delay mean_actual");
    require_non_negative(s.mean_internal, "delay mean_internal");
    require_non_negative(s.var_actual, "delay var_actual");
    require_non_negative(s.var_internal, "delay var_internal");
}

// =============================================================================
// Delays and prediction
// =============================================================================

DelayDraw draw_delays(const DelaySpec &spec, Rng &rng) {
    auto one = [&rng](double mean, double var) {
        const double x = rng.normal(mean, var);
        return std::max(0L, std::lround(x));
    };
    DelayDraw draw;
    draw.d_actual = one(spec.mean_actual, spec.var_actual);
    draw.d_perceived = one(spec.mean_internal, spec.var_internal);
    return draw;
}

GaussianBelief prediction_distribution(const ModelParams &p, GaussianBelief current, long d,
                                       Horizon horizon) {
    if (d < 0)
        fail(Errc::domain, "perceived delay must be >= 0");
    const double h = static_cast<double>(horizon == Horizon::at_delay ? d : d + 1);
    const double tri = triangular(d);
    GaussianBelief out;
    out.mean = current.mean + p.b_u * h * p.u_current + p.b_u * tri * p.delta_u_internal;
    out.var = current.var + p.b_u * p.b_u * tri * p.sigma_u2_internal + h * p.sigma_x2_internal;
    return out;
}

double update_variance(const ModelParams &p, long d_perceived) {
    return prediction_distribution(p, {0.0, p.sigma_y2}, d_perceived, Horizon::after_delay).var;
}

double wand_update_variance(const ModelParams &p) {
    return p.sigma_x2_internal + 2.0 * p.sigma_z2 + p.sigma_p2;
}

double kalman_gain(double prior_var, double obs_var) {
    const double total = prior_var + obs_var;
    if (total <= 0.0)
        return 0.0;
    return prior_var / total;
}

GaussianBelief kalman_update(GaussianBelief prior, double observation, double sigma_y2) {
    if (!(sigma_y2 > 0.0))
        fail(Errc::domain, "observation noise variance must be > 0");
    if (!(prior.var >= 0.0))
        fail(Errc::domain, "prior variance must be >= 0");
    const double k = kalman_gain(prior.var, sigma_y2);
    // prior.var * sy2 / (prior.var + sy2) equals (1 - k) prior.var without the
    // cancellation in 1 - k when the prior dominates.
    return {prior.mean + k * (observation - prior.mean), prior.var * sigma_y2 / (prior.var + sigma_y2)};
}

// =============================================================================
// Error samplers (no wand)
// =============================================================================

double delay_mismatch(const ModelParams &p, DelayDraw draw) {
    const double D = static_cast<double>(draw.d_actual);
    const double d = static_cast<double>(draw.d_perceived);
    // Actual displacement over D+1 steps minus the planned one over d+1.
    const double input_part = (D - d) * p.u_current;
    const double trend_part =
        triangular(draw.d_actual) * p.delta_u_actual - triangular(draw.d_perceived) * p.delta_u_internal;
    return p.b_u * (input_part + trend_part);
}

double prediction_gain(const ModelParams &p, long d_perceived) {
    return kalman_gain(update_variance(p, d_perceived), p.sigma_y2);
}

double prediction_error(const ModelParams &p, DelayDraw draw, const PredictionNoise &n) {
    const double innovation =
        delay_mismatch(p, draw) + p.b_u * n.input + n.transition + n.obs_next + n.obs_now;
    return prediction_gain(p, draw.d_perceived) * innovation;
}

double operation_error(const ModelParams &p, DelayDraw draw, const OperationNoise &n) {
    return delay_mismatch(p, draw) + p.b_u * (n.input_actual - n.recollect) + n.transition_actual -
           n.transition_internal + 2.0 * n.obs;
}

PredictionNoise draw_prediction_noise(const ModelParams &p, DelayDraw draw, Rng &rng) {
    const double steps = static_cast<double>(draw.d_actual + 1);
    PredictionNoise n;
    n.input = rng.normal(0.0, steps * p.sigma_u2_actual);
    n.transition = rng.normal(0.0, steps * p.sigma_x2_actual);
    n.obs_next = rng.normal(0.0, p.sigma_y2);
    n.obs_now = rng.normal(0.0, p.sigma_y2);
    return n;
}

OperationNoise draw_operation_noise(const ModelParams &p, DelayDraw draw, Rng &rng) {
    const double steps = static_cast<double>(draw.d_actual + 1);
    OperationNoise n;
    n.input_actual = rng.normal(0.0, steps * p.sigma_u2_actual);
    n.recollect = rng.normal(0.0, triangular(draw.d_perceived) * p.sigma_u2_internal);
    n.transition_actual = rng.normal(0.0, steps * p.sigma_x2_actual);
    n.transition_internal = rng.normal(0.0, static_cast<double>(draw.d_perceived) * p.sigma_x2_internal);
    n.obs = rng.normal(0.0, p.sigma_y2);
    return n;
}

double sample_prediction_error(const ModelParams &p, DelayDraw draw, Rng &rng) {
    return prediction_error(p, draw, draw_prediction_noise(p, draw, rng));
}

double sample_operation_error(const ModelParams &p, DelayDraw draw, Rng &rng) {
    return operation_error(p, draw, draw_operation_noise(p, draw, rng));
}

// =============================================================================
// Free energy and aggregate measures
// =============================================================================

double free_energy(const FreeEnergyInputs &in) {
    const double s = in.s_p + in.s_l;
    if (!(s > 0.0))
        fail(Errc::domain, "free energy needs s_p + s_l > 0");
    return 0.5 * (in.delta * in.delta / s + std::log(2.0 * std::numbers::pi * s));
}

double task_performance(std::span<const double> errors, double e_max) {
    if (errors.empty())
        fail(Errc::domain, "task performance of an empty sample");
    if (!(e_max > 0.0))
        fail(Errc::domain, "e_max must be > 0");
    const auto ok = std::count_if(errors.begin(), errors.end(),
                                  [e_max](double e) { return std::abs(e) <= e_max; });
    return 100.0 * static_cast<double>(ok) / static_cast<double>(errors.size());
}

double soa_percentage(std::span<const double> f_samples, double f_max) {
    if (f_samples.empty())
        fail(Errc::domain, "SoA of an empty sample");
    if (!(f_max > 0.0))
        fail(Errc::domain, "f_max must be > 0");
    double sum = 0.0;
    for (double f : f_samples)
        sum += std::clamp((f_max - f) / f_max, 0.0, 1.0);
    return 100.0 * sum / static_cast<double>(f_samples.size());
}

// =============================================================================
// Predictive Wand
// =============================================================================

double wand_tip(double x_actual, double u, double b_u, double d_bar_actual) {
    return x_actual + b_u * d_bar_actual * u;
}

GaussianBelief wand_prediction(const ModelParams &p, double x_actual, double u, double d_bar_actual,
                               Horizon horizon) {
    if (horizon == Horizon::at_delay)
        return {wand_tip(x_actual, u, p.b_u, d_bar_actual), p.sigma_z2 + p.sigma_p2};
    return {x_actual + p.b_u * (d_bar_actual + 1.0) * u, wand_update_variance(p)};
}

double wand_mismatch(const ModelParams &p, long d_actual, double d_bar_actual) {
    const double D = static_cast<double>(d_actual);
    return p.b_u * ((D - d_bar_actual) * p.u_current + triangular(d_actual) * p.delta_u_actual);
}

double wand_prediction_gain(const ModelParams &p) {
    return kalman_gain(wand_update_variance(p), p.sigma_y2);
}

double wand_prediction_error(const ModelParams &p, DelayDraw draw, double d_bar_actual,
                             const WandPredictionNoise &n) {
    const double innovation =
        wand_mismatch(p, draw.d_actual, d_bar_actual) + p.b_u * n.input + n.transition + n.obs;
    return wand_prediction_gain(p) * innovation;
}

double wand_operation_error(const ModelParams &p, DelayDraw draw, double d_bar_actual,
                            const WandOperationNoise &n) {
    return wand_mismatch(p, draw.d_actual, d_bar_actual) + p.b_u * n.input + n.transition -
           2.0 * n.wand_obs - n.wand_pred;
}

WandPredictionNoise draw_wand_prediction_noise(const ModelParams &p, DelayDraw draw, Rng &rng) {
    const double steps = static_cast<double>(draw.d_actual + 1);
    WandPredictionNoise n;
    n.input = rng.normal(0.0, steps * p.sigma_u2_actual);
    n.transition = rng.normal(0.0, steps * p.sigma_x2_actual);
    n.obs = rng.normal(0.0, p.sigma_y2);
    return n;
}

WandOperationNoise draw_wand_operation_noise(const ModelParams &p, DelayDraw draw, Rng &rng) {
    const double steps = static_cast<double>(draw.d_actual + 1);
    WandOperationNoise n;
    n.input = rng.normal(0.0, steps * p.sigma_u2_actual);
    n.transition = rng.normal(0.0, steps * p.sigma_x2_actual);
    n.wand_obs = rng.normal(0.0, p.sigma_z2);
    n.wand_pred = rng.normal(0.0, p.sigma_p2);
    return n;
}

double sample_wand_prediction_error(const ModelParams &p, DelayDraw draw, double d_bar_actual,
                                    Rng &rng) {
    return wand_prediction_error(p, draw, d_bar_actual, draw_wand_prediction_noise(p, draw, rng));
}

double sample_wand_operation_error(const ModelParams &p, DelayDraw draw, double d_bar_actual,
                                   Rng &rng) {
    return wand_operation_error(p, draw, d_bar_actual, draw_wand_operation_noise(p, draw, rng));
}

} // namespace delaylab
