#include "errors.hpp"
#include "model.hpp"
#include "montecarlo.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace delaylab;

namespace {

void expect_rel(double actual, double expected, double rel = 1e-9) {
    EXPECT_NEAR(actual, expected, rel * std::max(1.0, std::abs(expected))) << "expected " << expected;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;
};

template <class F>
Moments moments(int n, F &&draw) {
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = draw();
        s1 += x;
        s2 += x * x;
    }
    Moments m;
    m.mean = s1 / n;
    m.var = (s2 - n * m.mean * m.mean) / (n - 1);
    return m;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

ModelParams noiseless() {
    ModelParams p;
    p.sigma_u2_actual = p.sigma_u2_internal = 0.0;
    p.sigma_x2_actual = p.sigma_x2_internal = 0.0;
    p.sigma_y2 = p.sigma_z2 = p.sigma_p2 = 0.0;
    return p;
}

} // namespace

// =============================================================================
// Closed forms
// =============================================================================

TEST(PredictionDistribution, ZeroDelayIsIdentity) {
    ModelParams p;
    p.u_current = 0.7;
    p.delta_u_internal = 0.0;
    const auto b = prediction_distribution(p, {5.0, 2.0}, 0, Horizon::at_delay);
    EXPECT_EQ(b.mean, 5.0);
    EXPECT_EQ(b.var, 2.0);
}

TEST(PredictionDistribution, DefaultParamsAfterDelay) {
    const auto b = prediction_distribution(ModelParams{}, {0.0, 1.0}, 20, Horizon::after_delay);
    expect_rel(b.mean, 2.2 * 210 * 0.005);
    expect_rel(b.mean, 2.31);
    expect_rel(b.var, 1.0 + 4.84 * 210 * 0.0001 + 21.0);
    expect_rel(b.var, 22.10164);
}

TEST(PredictionDistribution, DefaultParamsAtDelay) {
    const auto b = prediction_distribution(ModelParams{}, {0.0, 1.0}, 20, Horizon::at_delay);
    expect_rel(b.mean, 2.31);
    expect_rel(b.var, 21.10164);
}

TEST(PredictionDistribution, NegativeDelayIsDomainError) {
    try {
        prediction_distribution(ModelParams{}, {0.0, 1.0}, -1, Horizon::at_delay);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.code(), Errc::domain);
    }
}

TEST(PredictionError, CalibratedNoiselessAgentHasZeroError) {
    ModelParams p = noiseless();
    p.delta_u_actual = p.delta_u_internal = 0.0;
    p.u_current = 0.4;
    EXPECT_EQ(prediction_error(p, {20, 20}, {}), 0.0);
}

TEST(PredictionError, DeterministicTermScaledByGain) {
    ModelParams p;
    p.u_current = 0.1;
    const double gain = 22.10164 / 23.10164;
    expect_rel(delay_mismatch(p, {30, 20}), 2.2 * 10 * (0.1 + 25.5 * 0.005));
    expect_rel(delay_mismatch(p, {30, 20}), 5.005);
    expect_rel(prediction_gain(p, 20), gain);
    expect_rel(prediction_error(p, {30, 20}, {}), 5.005 * gain);
}

TEST(OperationError, EqualDelaysNoNoiseIsZero) {
    ModelParams p = noiseless();
    p.u_current = -0.3;
    EXPECT_EQ(operation_error(p, {33, 33}, {}), 0.0);
}

TEST(OperationError, DeterministicTerm) {
    ModelParams p;
    p.u_current = 0.5;
    expect_rel(operation_error(p, {40, 20}, {}), 2.2 * 20 * (0.5 + 30.5 * 0.005));
    expect_rel(operation_error(p, {40, 20}, {}), 28.71);
}

TEST(OperationError, NoiseAggregatesEnterWithSigns) {
    ModelParams p;
    p.delta_u_actual = p.delta_u_internal = 0.0;
    OperationNoise n{1.0, 2.0, 3.0, 4.0, 5.0};
    // b_u (e_u - e_rec) + e_x - e_xint + 2 e_y
    expect_rel(operation_error(p, {10, 10}, n), 2.2 * (1.0 - 2.0) + 3.0 - 4.0 + 10.0);
}

TEST(FreeEnergy, Examples) {
    EXPECT_NEAR(free_energy({0.0, 1.0 / (2.0 * std::numbers::pi), 0.0}), 0.0, 1e-15);
    expect_rel(free_energy({1.0, 1.0, 0.0}), 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)));
    expect_rel(free_energy({1.0, 0.5, 0.5}), 1.4189385332046727);
    EXPECT_GT(free_energy({2.0, 1.0, 0.0}), free_energy({1.0, 1.0, 0.0}));
}

TEST(FreeEnergy, NonPositiveVarianceIsDomainError) {
    EXPECT_THROW(free_energy({1.0, 0.0, 0.0}), Error);
    EXPECT_THROW(free_energy({1.0, -2.0, 1.0}), Error);
}

TEST(FreeEnergy, MinimumAtZeroErrorAndVarianceStationaryPoint) {
    for (double s : {0.3, 1.0, 7.0})
        for (double d : {0.1, 1.0, 3.0})
            EXPECT_LT(free_energy({0.0, s, 0.0}), free_energy({d, s, 0.0}));
    // dF/ds = (1/s - d^2/s^2)/2 changes sign at s = d^2.
    for (double d : {0.5, 1.0, 2.0, 5.0}) {
        const double s0 = d * d;
        const double h = 1e-4 * s0;
        const double below = free_energy({d, s0 - h, 0.0}) - free_energy({d, s0 - 2 * h, 0.0});
        const double above = free_energy({d, s0 + 2 * h, 0.0}) - free_energy({d, s0 + h, 0.0});
        EXPECT_LT(below, 0.0);
        EXPECT_GT(above, 0.0);
    }
}

TEST(TaskPerformance, Examples) {
    const std::vector<double> all_ok = {0.0, 10.0, -199.0};
    EXPECT_EQ(task_performance(all_ok, 200.0), 100.0);
    const std::vector<double> half = {100, 300, 150, 250};
    EXPECT_EQ(task_performance(half, 200.0), 50.0);
    const std::vector<double> boundary = {-200, 200};
    EXPECT_EQ(task_performance(boundary, 200.0), 100.0);
    EXPECT_THROW(task_performance(std::vector<double>{}, 200.0), Error);
}

TEST(SoaPercentage, Examples) {
    const double fm = 8.0;
    EXPECT_EQ(soa_percentage(std::vector<double>{fm, fm}, fm), 0.0);
    EXPECT_EQ(soa_percentage(std::vector<double>{0.0, 0.0}, fm), 100.0);
    EXPECT_EQ(soa_percentage(std::vector<double>{fm / 2, fm / 2}, fm), 50.0);
    // Clamped at both ends.
    EXPECT_EQ(soa_percentage(std::vector<double>{-5.0, 3 * fm}, fm), 50.0);
    EXPECT_THROW(soa_percentage(std::vector<double>{}, fm), Error);
}

TEST(Wand, TipExamples) {
    EXPECT_EQ(wand_tip(37.0, 0.0, 2.2, 80.0), 37.0);
    expect_rel(wand_tip(100.0, 0.5, 2.2, 20.0), 122.0);
    expect_rel(wand_tip(0.0, -1.0, 2.2, 100.0), -220.0);
}

TEST(Wand, PredictionExamples) {
    ModelParams p = noiseless();
    auto b = wand_prediction(p, 12.0, 0.3, 40.0, Horizon::at_delay);
    expect_rel(b.mean, wand_tip(12.0, 0.3, p.b_u, 40.0));
    EXPECT_EQ(b.var, 0.0);
    b = wand_prediction(ModelParams{}, 0.0, 0.0, 20.0, Horizon::after_delay);
    EXPECT_EQ(b.mean, 0.0);
    expect_rel(b.var, 403.0);
    b = wand_prediction(ModelParams{}, 50.0, 1.0, 20.0, Horizon::after_delay);
    expect_rel(b.mean, 96.2);
}

TEST(Wand, GainAndPredictionError) {
    ModelParams p;
    expect_rel(wand_prediction_gain(p), 403.0 / 404.0);
    expect_rel(wand_prediction_error(p, {20, 20}, 20.0, {}), 403.0 / 404.0 * 2.2 * 210 * 0.005);
    EXPECT_NEAR(wand_prediction_error(p, {20, 20}, 20.0, {}), 2.30428, 5e-6);
    p.u_current = 0.1;
    p.delta_u_actual = 0.0;
    expect_rel(wand_prediction_error(p, {30, 7}, 20.0, {}), 403.0 / 404.0 * 2.2 * 10 * 0.1);
    EXPECT_NEAR(wand_prediction_error(p, {30, 7}, 20.0, {}), 2.19455, 5e-6);
}

TEST(Wand, OperationError) {
    ModelParams p;
    expect_rel(wand_operation_error(p, {20, 3}, 20.0, {}), 2.31);
    p.delta_u_actual = 0.0;
    EXPECT_EQ(wand_operation_error(p, {20, 3}, 20.0, {}), 0.0);
    const WandOperationNoise n{1.0, 2.0, 3.0, 4.0};
    expect_rel(wand_operation_error(p, {20, 3}, 20.0, n), 2.2 * 1.0 + 2.0 - 6.0 - 4.0);
}

TEST(Kalman, Examples) {
    auto b = kalman_update({1.5, 0.0}, 99.0, 1.0);
    EXPECT_EQ(b.mean, 1.5);
    EXPECT_EQ(b.var, 0.0);
    b = kalman_update({2.0, 4.0}, 6.0, 4.0);
    expect_rel(b.mean, 4.0);
    expect_rel(b.var, 2.0);
    b = kalman_update({0.0, 3.0}, 4.0, 1.0);
    expect_rel(kalman_gain(3.0, 1.0), 0.75);
    expect_rel(b.mean, 3.0);
    expect_rel(b.var, 0.75);
    EXPECT_THROW(kalman_update({0.0, 1.0}, 1.0, 0.0), Error);
}

// =============================================================================
// Properties
// =============================================================================

TEST(KalmanProperty, ContractionAndExactPosterior) {
    Rng r(99);
    for (int i = 0; i < 10000; ++i) {
        const double prior_var = std::exp(r.normal(0.0, 9.0));
        const double sy2 = std::exp(r.normal(0.0, 9.0));
        const auto b = kalman_update({r.normal(), prior_var}, r.normal(0.0, 100.0), sy2);
        const double k = kalman_gain(prior_var, sy2);
        ASSERT_LE(b.var, prior_var);
        ASSERT_LE(b.var, sy2 * (1 + 1e-12));
        ASSERT_NEAR(b.var, sy2 * prior_var / (prior_var + sy2), 1e-12 * b.var);
        ASSERT_NEAR(b.var, (1.0 - k) * prior_var, 1e-6 * prior_var);
    }
}

TEST(GainProperty, StrictlyInsideUnitInterval) {
    Rng r(5);
    for (int i = 0; i < 1000; ++i) {
        ModelParams p;
        p.sigma_u2_internal = std::exp(r.normal(-6.0, 4.0));
        p.sigma_x2_internal = std::exp(r.normal(0.0, 4.0));
        p.sigma_y2 = std::exp(r.normal(0.0, 4.0));
        p.sigma_z2 = std::exp(r.normal(0.0, 4.0));
        p.sigma_p2 = std::exp(r.normal(3.0, 4.0));
        const long d = static_cast<long>(r.uniform() * 150);
        const double g = prediction_gain(p, d);
        const double gw = wand_prediction_gain(p);
        ASSERT_GT(g, 0.0);
        ASSERT_LT(g, 1.0);
        ASSERT_GT(gw, 0.0);
        ASSERT_LT(gw, 1.0);
    }
}

TEST(WandProperty, PerceivedDelayDoesNotEnter) {
    const ModelParams p;
    for (long d_perceived : {0L, 5L, 50L, 500L}) {
        Rng a(17), b(17);
        for (int i = 0; i < 200; ++i) {
            ASSERT_EQ(sample_wand_prediction_error(p, {40, 40}, 40.0, a),
                      sample_wand_prediction_error(p, {40, d_perceived}, 40.0, b));
            ASSERT_EQ(sample_wand_operation_error(p, {40, 40}, 40.0, a),
                      sample_wand_operation_error(p, {40, d_perceived}, 40.0, b));
        }
    }
}

// =============================================================================
// Delay draws
// =============================================================================

TEST(DrawDelays, ZeroVarianceIsDeterministic) {
    Rng r(1);
    const auto d = draw_delays(DelaySpec::same(20.0, 0.0), r);
    EXPECT_EQ(d.d_actual, 20);
    EXPECT_EQ(d.d_perceived, 20);
}

TEST(DrawDelays, SmallVarianceConcentratesAroundMean) {
    Rng r(2);
    const int n = 100000;
    double sum = 0.0;
    int near = 0;
    for (int i = 0; i < n; ++i) {
        const auto d = draw_delays(DelaySpec::same(20.0, 0.1), r);
        sum += static_cast<double>(d.d_actual);
        near += d.d_actual >= 19 && d.d_actual <= 21;
    }
    EXPECT_NEAR(sum / n, 20.0, 0.05);
    EXPECT_GE(near, n - 5);
}

TEST(DrawDelays, ClampedZeroMassMatchesGaussianOracle) {
    Rng r(3);
    const int n = 100000;
    int zeros_a = 0, zeros_p = 0;
    for (int i = 0; i < n; ++i) {
        const auto d = draw_delays(DelaySpec::same(0.2, 10.0), r);
        ASSERT_GE(d.d_actual, 0);
        ASSERT_GE(d.d_perceived, 0);
        zeros_a += d.d_actual == 0;
        zeros_p += d.d_perceived == 0;
    }
    // Rounds to 0 or below exactly when the draw is below 0.5.
    const double oracle = normal_cdf((0.5 - 0.2) / std::sqrt(10.0));
    EXPECT_NEAR(static_cast<double>(zeros_a) / n, oracle, 0.01);
    EXPECT_NEAR(static_cast<double>(zeros_p) / n, oracle, 0.01);
}

TEST(DrawDelays, InvalidSpecRejected) {
    EXPECT_THROW(validate(DelaySpec::same(-1.0, 1.0)), Error);
    EXPECT_THROW(validate(DelaySpec::same(1.0, -1.0)), Error);
}

// =============================================================================
// Sampled variances against analytic aggregates
// =============================================================================

TEST(SampledVariance, PredictionError) {
    const ModelParams p; // u = 0
    const DelayDraw draw{20, 20};
    const double g = prediction_gain(p, 20);
    const double expected =
        g * g * (21.0 * (p.b_u * p.b_u * p.sigma_u2_actual + p.sigma_x2_actual) + 2.0 * p.sigma_y2);
    Rng r(21);
    const auto m = moments(100000, [&] { return sample_prediction_error(p, draw, r); });
    EXPECT_NEAR(m.var / expected, 1.0, 0.03);
    EXPECT_NEAR(m.mean, prediction_error(p, draw, {}), 0.06);
}

TEST(SampledVariance, OperationError) {
    ModelParams p;
    p.delta_u_actual = p.delta_u_internal = 0.0;
    const DelayDraw draw{20, 20};
    const double b2 = p.b_u * p.b_u;
    const double expected = b2 * (21 * p.sigma_u2_actual + 210 * p.sigma_u2_internal) + 21 * p.sigma_x2_actual +
                            20 * p.sigma_x2_internal + 4 * p.sigma_y2;
    Rng r(22);
    const auto m = moments(100000, [&] { return sample_operation_error(p, draw, r); });
    EXPECT_NEAR(m.var / expected, 1.0, 0.03);
    EXPECT_NEAR(m.mean, 0.0, 0.08);
}

TEST(SampledVariance, WandOperationError) {
    ModelParams p;
    p.delta_u_actual = 0.0;
    const double expected =
        p.b_u * p.b_u * 21 * p.sigma_u2_actual + 21 * p.sigma_x2_actual + 4 * p.sigma_z2 + p.sigma_p2;
    Rng r(23);
    const auto m = moments(100000, [&] { return sample_wand_operation_error(p, {20, 20}, 20.0, r); });
    EXPECT_NEAR(m.var / expected, 1.0, 0.03);
}

TEST(MonotoneDegradation, MeanAbsOperationErrorGrowsWithDelay) {
    const ModelParams p;
    double prev_mean = -1.0, prev_se = 0.0;
    for (double mean : {20.0, 40.0, 60.0, 80.0, 100.0}) {
        Rng r(static_cast<std::uint64_t>(mean));
        std::vector<double> abs_err;
        for (int i = 0; i < 5000; ++i)
            abs_err.push_back(std::abs(sample_episode(p, {mean, 10.0, false, std::nullopt}, r).operation_error));
        const MeanSe m = mean_se(abs_err);
        EXPECT_GE(m.mean + 2 * *m.se + 2 * prev_se, prev_mean) << "delay " << mean;
        prev_mean = m.mean;
        prev_se = *m.se;
    }
}

TEST(Validation, RejectsBadParams) {
    ModelParams p;
    p.sigma_y2 = -1.0;
    EXPECT_THROW(validate(p), Error);
    p = {};
    p.u_current = 1.5;
    EXPECT_THROW(validate(p), Error);
    p = {};
    p.e_max = 0.0;
    EXPECT_THROW(validate(p), Error);
    EXPECT_NO_THROW(validate(ModelParams{}));
}
