#include "montecarlo.hpp"

#include "errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace delaylab {

std::vector<Condition> default_grid(double delta_u) {
    std::vector<Condition> grid;
    for (bool wand : {false, true})
        for (double var : {0.1, 10.0})
            for (double mean : {20.0, 40.0, 60.0, 80.0, 100.0})
                grid.push_back({mean, var, wand, delta_u});
    return grid;
}

ModelParams params_for(const ModelParams &params, const Condition &condition) {
    ModelParams p = params;
    if (condition.delta_u) {
        p.delta_u_actual = *condition.delta_u;
        p.delta_u_internal = *condition.delta_u;
    }
    return p;
}

namespace {

ErrorSample episode(const ModelParams &p, const Condition &c, Rng &rng) {
    const DelayDraw draw = draw_delays(DelaySpec::same(c.delay_mean, c.delay_var), rng);
    ErrorSample s;
    double s_p = 0.0;
    if (c.wand) {
        s.operation_error = sample_wand_operation_error(p, draw, c.delay_mean, rng);
        s.prediction_error = sample_wand_prediction_error(p, draw, c.delay_mean, rng);
        s_p = wand_update_variance(p);
    } else {
        s.operation_error = sample_operation_error(p, draw, rng);
        s.prediction_error = sample_prediction_error(p, draw, rng);
        s_p = update_variance(p, draw.d_perceived);
    }
    s.free_energy = free_energy({s.prediction_error, s_p, p.sigma_y2});
    return s;
}

void check_condition(const Condition &c) {
    if (!(c.delay_mean > 0.0) || !std::isfinite(c.delay_mean))
        fail(Errc::invalid_argument, "condition delay_mean must be > 0");
    if (!(c.delay_var >= 0.0) || !std::isfinite(c.delay_var))
        fail(Errc::invalid_argument, "condition delay_var must be >= 0");
}

} // namespace

ErrorSample sample_episode(const ModelParams &params, const Condition &condition, Rng &rng) {
    return episode(params_for(params, condition), condition, rng);
}

RunResult run_condition(const Condition &condition, const ModelParams &params, int n_samples, Rng &rng,
                        int run_index) {
    if (n_samples < 1)
        fail(Errc::invalid_argument, "n_samples must be >= 1");
    check_condition(condition);
    const ModelParams p = params_for(params, condition);
    validate(p);

    std::vector<double> op(static_cast<std::size_t>(n_samples));
    std::vector<double> f(static_cast<std::size_t>(n_samples));
    for (std::size_t i = 0; i < op.size(); ++i) {
        const ErrorSample s = episode(p, condition, rng);
        op[i] = s.operation_error;
        f[i] = s.free_energy;
    }
    RunResult r;
    r.condition = condition;
    r.run_index = run_index;
    r.performance = task_performance(op, p.e_max);
    r.soa = soa_percentage(f, p.f_max);
    r.n_samples = n_samples;
    return r;
}

std::uint64_t run_seed(std::uint64_t master_seed, std::size_t condition_index, std::size_t run_index) {
    return derive_seed(master_seed, {0x52554e53ULL, condition_index, run_index});
}

std::vector<RunResult> run_grid(const std::vector<Condition> &conditions, const ModelParams &params,
                                int runs, int n_samples, std::uint64_t master_seed, unsigned threads) {
    if (runs < 1)
        fail(Errc::invalid_argument, "runs must be >= 1");
    for (const auto &c : conditions)
        check_condition(c);

    const std::size_t total = conditions.size() * static_cast<std::size_t>(runs);
    std::vector<RunResult> out(total);
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (std::size_t job = next++; job < total; job = next++) {
            const std::size_t ci = job / static_cast<std::size_t>(runs);
            const std::size_t ri = job % static_cast<std::size_t>(runs);
            try {
                Rng rng(run_seed(master_seed, ci, ri));
                out[job] = run_condition(conditions[ci], params, n_samples, rng, static_cast<int>(ri));
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    };

    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(total, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }
    if (error)
        std::rethrow_exception(error);
    return out;
}

MeanSe mean_se(const std::vector<double> &values) {
    MeanSe r;
    if (values.empty())
        return r;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    const double n = static_cast<double>(values.size());
    r.mean = sum / n;
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values)
            ss += (v - r.mean) * (v - r.mean);
        r.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return r;
}

GridSummary summarize(const std::vector<RunResult> &results) {
    std::vector<Condition> order;
    std::vector<std::vector<double>> perf, soa;
    for (const auto &r : results) {
        auto it = std::find(order.begin(), order.end(), r.condition);
        std::size_t idx = static_cast<std::size_t>(it - order.begin());
        if (it == order.end()) {
            order.push_back(r.condition);
            perf.emplace_back();
            soa.emplace_back();
        }
        perf[idx].push_back(r.performance);
        soa[idx].push_back(r.soa);
    }
    GridSummary summary;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const MeanSe p = mean_se(perf[i]);
        const MeanSe s = mean_se(soa[i]);
        summary.push_back({order[i], static_cast<int>(perf[i].size()), p.mean, p.se, s.mean, s.se});
    }
    return summary;
}

double calibrate_f_max(const ModelParams &params, const Condition &condition, int n_samples,
                       std::uint64_t seed, double percentile) {
    if (n_samples < 1)
        fail(Errc::invalid_argument, "calibration needs at least one sample");
    if (!(percentile > 0.0 && percentile <= 100.0))
        fail(Errc::invalid_argument, "calibration percentile must lie in (0, 100]");
    check_condition(condition);
    const ModelParams p = params_for(params, condition);
    Rng rng(seed);
    std::vector<double> f(static_cast<std::size_t>(n_samples));
    for (auto &v : f)
        v = episode(p, condition, rng).free_energy;
    std::sort(f.begin(), f.end());
    const double pos = percentile / 100.0 * static_cast<double>(f.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, f.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return f[lo] + frac * (f[hi] - f[lo]);
}

} // namespace delaylab
