#include "figure.hpp"

#include "errors.hpp"
#include "montecarlo.hpp"
#include "util.hpp"

#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace delaylab {

namespace {

struct FigureSpec {
    const char *measure;
    double delta_u;
};

FigureSpec spec_for(int figure) {
    switch (figure) {
    case 4: return {"performance", 0.005};
    case 5: return {"soa", 0.005};
    case 11: return {"soa", 0.015};
    default: fail(Errc::invalid_argument, "figure must be 4, 5 or 11");
    }
}

} // namespace

Table figure_table(const Table &results, int figure) {
    const FigureSpec spec = spec_for(figure);
    const std::size_t c_mean = results.require_column("delay_mean_steps");
    const std::size_t c_var = results.require_column("delay_var_steps2");
    const std::size_t c_wand = results.require_column("wand");
    const std::size_t c_du = results.require_column("delta_u");
    const std::size_t c_val = results.require_column(spec.measure);

    using Key = std::tuple<bool, double, double>; // wand, variance, mean
    std::map<Key, std::vector<double>> cells;
    std::set<std::string> trends;
    for (std::size_t i = 0; i < results.rows.size(); ++i) {
        const auto &row = results.rows[i];
        const std::string where = "results row " + std::to_string(i + 2);
        const double du = parse_double(row[c_du], where + " delta_u");
        trends.insert(row[c_du]);
        if (std::abs(du - spec.delta_u) > 1e-12)
            continue;
        const bool wand = parse_double(row[c_wand], where + " wand") != 0.0;
        const Key key{wand, parse_double(row[c_var], where + " delay_var_steps2"),
                      parse_double(row[c_mean], where + " delay_mean_steps")};
        cells[key].push_back(parse_double(row[c_val], where + " " + spec.measure));
    }
    if (cells.empty()) {
        std::string seen;
        for (const auto &t : trends)
            seen += (seen.empty() ? "" : ", ") + t;
        fail(Errc::validation, "figure " + std::to_string(figure) + " needs delta_u " +
                                   format_double(spec.delta_u) + "; results contain " +
                                   (seen.empty() ? std::string("no rows") : seen));
    }

    Table out{{"figure", "measure", "wand", "delay_var_steps2", "delay_mean_steps", "delay_mean_ms", "runs", "mean",
               "se"},
              {}};
    std::string gaps;
    for (const auto &c : default_grid(spec.delta_u)) {
        const auto it = cells.find(Key{c.wand, c.delay_var, c.delay_mean});
        if (it == cells.end()) {
            gaps += "\n  wand=" + std::string(c.wand ? "1" : "0") + " delay_var_steps2=" + format_double(c.delay_var) +
                    " delay_mean_steps=" + format_double(c.delay_mean);
            continue;
        }
        const MeanSe m = mean_se(it->second);
        out.rows.push_back({std::to_string(figure), spec.measure, c.wand ? "1" : "0", format_double(c.delay_var),
                            format_double(c.delay_mean), format_double(c.delay_mean * 10.0),
                            std::to_string(it->second.size()), format_double(m.mean),
                            m.se ? format_double(*m.se) : ""});
    }
    if (!gaps.empty())
        fail(Errc::validation, "results are missing conditions for figure " + std::to_string(figure) + ":" + gaps);
    return out;
}

} // namespace delaylab
