#pragma once

// Balanced fixed-effects factorial ANOVA.

#include "table.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace delaylab {

struct Factor {
    std::string name;
    std::vector<std::string> levels;
};

struct Observation {
    std::vector<std::size_t> levels; ///< one level index per factor
    double value = 0.0;
};

struct FactorialDataset {
    std::vector<Factor> factors;
    std::vector<Observation> observations;

    std::size_t cell_count() const;
    /// Every cell present with the same number of replicates.
    bool balanced() const;
    /// Replicates per cell; 0 when unbalanced.
    std::size_t replicates() const;
};

struct TableSelection {
    std::string response;
    std::vector<std::string> factors;
    /// Exact-match row filters (column, value).
    std::vector<std::pair<std::string, std::string>> where;
    /// Drop rows whose `excluded` column is 1/true, when that column exists.
    bool drop_excluded = true;
};

/// Builds a dataset from named columns. Levels are sorted numerically when
/// every label parses as a number, lexically otherwise.
FactorialDataset dataset_from_table(const Table &table, const TableSelection &selection);

struct AnovaRow {
    std::string effect; ///< factor names joined by ':' or "Residual"
    double df = 0.0;
    double ss = 0.0;
    double ms = 0.0;
    std::optional<double> f; ///< absent on the residual row
    std::optional<double> p;
    bool p_underflow = false; ///< true p below 1e-300, reported as 0
};

struct AnovaTable {
    std::vector<AnovaRow> rows; ///< effects by order, then the residual
    double total_ss = 0.0;
    double total_df = 0.0;

    const AnovaRow *find(const std::string &effect) const;
    const AnovaRow &residual() const { return rows.back(); }
    /// CSV columns: effect, df, SS, MS, F, p.
    std::string to_csv() const;
    /// Human-readable significance pattern, one line per effect.
    std::string summary() const;
};

/// Classical balanced SS decomposition. Effects with more than `max_order`
/// factors are pooled into the residual. Throws Error(validation) on
/// unbalanced data or when the residual has no degrees of freedom.
AnovaTable anova(const FactorialDataset &data, int max_order);

/// Upper tail of the F(df1, df2) distribution.
double f_distribution_sf(double f, double df1, double df2);

} // namespace delaylab
