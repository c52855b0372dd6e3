#pragma once

// Plot-ready aggregation of simulation results: one row per bar with mean
// and standard error over runs.

#include "table.hpp"

namespace delaylab {

/// Figure 4: performance, 5: SoA (input trend 0.005), 11: SoA (input trend
/// 0.015). Rows for the figure's input trend are selected from `results`;
/// every cell of the 5 x 2 x 2 grid must be present, otherwise
/// Error(validation) lists the gaps. SE is empty for single-run cells.
Table figure_table(const Table &results, int figure);

} // namespace delaylab
