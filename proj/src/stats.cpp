#include "stats.hpp"

#include "errors.hpp"
#include "util.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

namespace delaylab {

namespace {

constexpr double kPFloor = 1e-300;

bool is_number(const std::string &s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

bool truthy(const std::string &s) { return s == "1" || s == "true" || s == "TRUE" || s == "True"; }

} // namespace

std::size_t FactorialDataset::cell_count() const {
    std::size_t n = 1;
    for (const auto &f : factors)
        n *= f.levels.size();
    return n;
}

std::size_t FactorialDataset::replicates() const {
    std::vector<std::size_t> counts(cell_count(), 0);
    for (const auto &obs : observations) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < factors.size(); ++i)
            idx = idx * factors[i].levels.size() + obs.levels[i];
        ++counts[idx];
    }
    if (counts.empty())
        return 0;
    const std::size_t n = counts.front();
    for (std::size_t c : counts)
        if (c != n)
            return 0;
    return n;
}

bool FactorialDataset::balanced() const { return replicates() > 0; }

FactorialDataset dataset_from_table(const Table &table, const TableSelection &sel) {
    const std::size_t resp = table.require_column(sel.response);
    std::vector<std::size_t> cols;
    for (const auto &name : sel.factors)
        cols.push_back(table.require_column(name));
    std::vector<std::pair<std::size_t, std::string>> filters;
    for (const auto &[name, value] : sel.where)
        filters.emplace_back(table.require_column(name), value);
    const auto excluded = sel.drop_excluded ? table.column("excluded") : std::nullopt;

    std::vector<const std::vector<std::string> *> kept;
    for (const auto &row : table.rows) {
        if (excluded && truthy(row[*excluded]))
            continue;
        bool ok = true;
        for (const auto &[c, v] : filters)
            ok = ok && row[c] == v;
        if (ok)
            kept.push_back(&row);
    }

    FactorialDataset data;
    for (std::size_t f = 0; f < cols.size(); ++f) {
        std::vector<std::string> levels;
        for (const auto *row : kept)
            levels.push_back((*row)[cols[f]]);
        std::sort(levels.begin(), levels.end());
        levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
        if (std::all_of(levels.begin(), levels.end(), is_number))
            std::stable_sort(levels.begin(), levels.end(), [](const auto &a, const auto &b) {
                return parse_double(a, "level") < parse_double(b, "level");
            });
        data.factors.push_back({sel.factors[f], std::move(levels)});
    }
    for (const auto *row : kept) {
        Observation obs;
        obs.value = parse_double((*row)[resp], sel.response);
        for (std::size_t f = 0; f < cols.size(); ++f) {
            const auto &lv = data.factors[f].levels;
            obs.levels.push_back(static_cast<std::size_t>(
                std::find(lv.begin(), lv.end(), (*row)[cols[f]]) - lv.begin()));
        }
        data.observations.push_back(std::move(obs));
    }
    return data;
}

// =============================================================================
// ANOVA
// =============================================================================

AnovaTable anova(const FactorialDataset &data, int max_order) {
    const std::size_t k = data.factors.size();
    if (k == 0 || k > 10)
        fail(Errc::validation, "ANOVA needs between 1 and 10 factors");
    if (max_order < 1)
        fail(Errc::validation, "max_order must be >= 1");
    for (const auto &f : data.factors)
        if (f.levels.size() < 2)
            fail(Errc::validation, "factor '" + f.name + "' has fewer than two levels");
    const std::size_t reps = data.replicates();
    if (reps == 0)
        fail(Errc::validation, "unbalanced design: every cell needs the same number of replicates");

    std::vector<std::size_t> dims;
    for (const auto &f : data.factors)
        dims.push_back(f.levels.size());
    const std::size_t cells = data.cell_count();
    auto cell_of = [&](const Observation &o) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < k; ++i)
            idx = idx * dims[i] + o.levels[i];
        return idx;
    };
    // Level of factor i in cell c.
    std::vector<std::vector<std::size_t>> cell_levels(cells, std::vector<std::size_t>(k));
    for (std::size_t c = 0; c < cells; ++c) {
        std::size_t rem = c;
        for (std::size_t i = k; i-- > 0;) {
            cell_levels[c][i] = rem % dims[i];
            rem /= dims[i];
        }
    }

    const double n_obs = static_cast<double>(data.observations.size());
    double grand = 0.0, raw_sq = 0.0;
    std::vector<double> cell_mean(cells, 0.0);
    for (const auto &o : data.observations) {
        grand += o.value;
        raw_sq += o.value * o.value;
        cell_mean[cell_of(o)] += o.value;
    }
    grand /= n_obs;
    for (auto &m : cell_mean)
        m /= static_cast<double>(reps);

    double ss_total = 0.0, ss_within = 0.0;
    for (const auto &o : data.observations) {
        ss_total += (o.value - grand) * (o.value - grand);
        const double w = o.value - cell_mean[cell_of(o)];
        ss_within += w * w;
    }
    const bool constant = ss_total <= 1e-24 * raw_sq;

    // Marginal means for every subset of factors, keyed by the projected
    // cell index. Balanced data means every cell carries equal weight.
    const std::size_t n_subsets = std::size_t{1} << k;
    std::vector<std::vector<double>> marginal(n_subsets);
    auto project = [&](std::size_t mask, std::size_t c) {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < k; ++i)
            if (mask & (std::size_t{1} << i))
                idx = idx * dims[i] + cell_levels[c][i];
        return idx;
    };
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
        std::size_t size = 1;
        for (std::size_t i = 0; i < k; ++i)
            if (mask & (std::size_t{1} << i))
                size *= dims[i];
        std::vector<double> sum(size, 0.0);
        std::vector<double> count(size, 0.0);
        for (std::size_t c = 0; c < cells; ++c) {
            sum[project(mask, c)] += cell_mean[c];
            count[project(mask, c)] += 1.0;
        }
        for (std::size_t j = 0; j < size; ++j)
            sum[j] /= count[j];
        marginal[mask] = std::move(sum);
    }

    struct Effect {
        std::size_t mask;
        double ss;
        double df;
    };
    std::vector<Effect> effects;
    for (std::size_t mask = 1; mask < n_subsets; ++mask) {
        double ss = 0.0;
        for (std::size_t c = 0; c < cells; ++c) {
            // Inclusion-exclusion over sub-subsets yields the interaction term.
            double alpha = 0.0;
            for (std::size_t sub = mask;; sub = (sub - 1) & mask) {
                const int sign = (std::popcount(mask) - std::popcount(sub)) % 2 ? -1 : 1;
                alpha += sign * marginal[sub][project(sub, c)];
                if (sub == 0)
                    break;
            }
            ss += alpha * alpha;
        }
        ss *= static_cast<double>(reps);
        double df = 1.0;
        for (std::size_t i = 0; i < k; ++i)
            if (mask & (std::size_t{1} << i))
                df *= static_cast<double>(dims[i] - 1);
        if (constant || ss <= 1e-12 * ss_total)
            ss = 0.0;
        effects.push_back({mask, ss, df});
    }
    std::stable_sort(effects.begin(), effects.end(), [](const Effect &a, const Effect &b) {
        return std::popcount(a.mask) < std::popcount(b.mask);
    });

    double res_ss = constant ? 0.0 : ss_within;
    double res_df = n_obs - static_cast<double>(cells);
    std::vector<Effect> tested;
    for (const auto &e : effects) {
        if (std::popcount(e.mask) <= max_order) {
            tested.push_back(e);
        } else {
            res_ss += e.ss;
            res_df += e.df;
        }
    }
    if (res_df <= 0.0)
        fail(Errc::validation, "residual has no degrees of freedom (need >= 2 replicates per cell "
                               "or a lower max_order)");
    if (res_ss <= 1e-12 * ss_total)
        res_ss = 0.0;
    const double res_ms = res_ss / res_df;

    AnovaTable table;
    table.total_ss = constant ? 0.0 : ss_total;
    table.total_df = n_obs - 1.0;
    for (const auto &e : tested) {
        AnovaRow row;
        for (std::size_t i = 0; i < k; ++i)
            if (e.mask & (std::size_t{1} << i))
                row.effect += (row.effect.empty() ? "" : ":") + data.factors[i].name;
        row.df = e.df;
        row.ss = e.ss;
        row.ms = e.ss / e.df;
        if (res_ms > 0.0) {
            row.f = row.ms / res_ms;
            row.p = f_distribution_sf(*row.f, row.df, res_df);
        } else if (row.ms > 0.0) {
            row.f = std::numeric_limits<double>::infinity();
            row.p = 0.0;
        } else {
            row.f = 0.0;
            row.p = 1.0;
        }
        if (*row.p < kPFloor) {
            row.p_underflow = true;
            row.p = 0.0;
        }
        table.rows.push_back(std::move(row));
    }
    table.rows.push_back({"Residual", res_df, res_ss, res_ms, std::nullopt, std::nullopt, false});
    return table;
}

const AnovaRow *AnovaTable::find(const std::string &effect) const {
    for (const auto &r : rows)
        if (r.effect == effect)
            return &r;
    return nullptr;
}

std::string AnovaTable::to_csv() const {
    Table t;
    t.header = {"effect", "df", "SS", "MS", "F", "p"};
    for (const auto &r : rows) {
        std::string p;
        if (r.p)
            p = r.p_underflow ? "<1e-300" : format_double(*r.p);
        t.rows.push_back({r.effect, format_double(r.df), format_double(r.ss), format_double(r.ms),
                          r.f ? format_double(*r.f) : "", p});
    }
    return t.to_csv();
}

std::string AnovaTable::summary() const {
    std::string out;
    char buf[256];
    for (const auto &r : rows) {
        if (!r.f)
            continue;
        const double p = *r.p;
        const char *stars = p < 0.001 ? "***" : p < 0.01 ? "**" : p < 0.05 ? "*" : "n.s.";
        std::string ptxt = r.p_underflow ? "< 1e-300" : (p < 0.001 ? "< 0.001" : "= " + format_double(p));
        std::snprintf(buf, sizeof buf, "%-40s F(%g, %g) = %.4g, p %s  %s\n", r.effect.c_str(), r.df,
                      residual().df, *r.f, ptxt.c_str(), stars);
        out += buf;
    }
    return out;
}

// =============================================================================
// F distribution
// =============================================================================

double f_distribution_sf(double f, double df1, double df2) {
    if (!(df1 >= 1.0) || !(df2 >= 1.0) || !std::isfinite(df1) || !std::isfinite(df2))
        fail(Errc::domain, "F distribution degrees of freedom must be >= 1");
    if (std::isnan(f) || f < 0.0)
        fail(Errc::domain, "F statistic must be >= 0");
    if (f == 0.0)
        return 1.0;
    if (std::isinf(f))
        return 0.0;
    using namespace boost::math::policies;
    using Policy = policy<underflow_error<ignore_error>, overflow_error<errno_on_error>,
                          evaluation_error<errno_on_error>>;
    boost::math::fisher_f_distribution<double, Policy> dist(df1, df2);
    return boost::math::cdf(boost::math::complement(dist, f));
}

} // namespace delaylab
