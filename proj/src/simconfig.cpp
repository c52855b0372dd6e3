#include "simconfig.hpp"

#include "errors.hpp"
#include "table.hpp"
#include "util.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace delaylab {

using nlohmann::json;

// =============================================================================
// Unit conversion
// =============================================================================

ModelParams SimConfig::model_params() const {
    ModelParams p;
    p.b_u = max_speed_px_per_s / frame_rate_hz;
    p.u_current = u_current;
    p.delta_u_internal = delta_u_internal;
    p.delta_u_actual = delta_u_actual;
    p.sigma_u2_internal = sigma_u2_internal;
    p.sigma_u2_actual = sigma_u2_actual;
    p.sigma_x2_internal = sigma_x2_internal_px2;
    p.sigma_x2_actual = sigma_x2_actual_px2;
    p.sigma_y2 = sigma_y2_px2;
    p.sigma_z2 = sigma_z2_px2;
    p.sigma_p2 = sigma_p2_px2;
    p.e_max = e_max_px;
    if (f_max)
        p.f_max = *f_max;
    return p;
}

std::vector<Condition> SimConfig::conditions() const {
    const double step = ms_per_step();
    std::vector<Condition> out;
    for (bool w : wand)
        for (double var : delay_vars_ms2)
            for (double mean : delay_means_ms)
                out.push_back({mean / step, var / (step * step), w, grid_delta_u});
    return out;
}

Condition SimConfig::calibration_condition() const {
    const double step = ms_per_step();
    const double mean = *std::max_element(delay_means_ms.begin(), delay_means_ms.end());
    const double var = *std::max_element(delay_vars_ms2.begin(), delay_vars_ms2.end());
    return {mean / step, var / (step * step), false, grid_delta_u};
}

std::uint64_t SimConfig::calibration_seed() const { return derive_seed(seed, {0x464d4158ULL}); }

void validate(const SimConfig &c) {
    auto positive = [](double v, const char *name) {
        if (!(v > 0.0) || !std::isfinite(v))
            fail(Errc::validation, std::string(name) + " must be > 0");
    };
    positive(c.max_speed_px_per_s, "model.max_speed_px_per_s");
    positive(c.frame_rate_hz, "model.frame_rate_hz");
    if (c.f_max)
        positive(*c.f_max, "model.f_max");
    if (c.delay_means_ms.empty() || c.delay_vars_ms2.empty() || c.wand.empty())
        fail(Errc::validation, "grid lists must not be empty");
    for (double m : c.delay_means_ms)
        positive(m, "grid.delay_means_ms[]");
    for (double v : c.delay_vars_ms2)
        if (!(v >= 0.0) || !std::isfinite(v))
            fail(Errc::validation, "grid.delay_vars_ms2[] must be >= 0");
    if (c.grid_delta_u && !std::isfinite(*c.grid_delta_u))
        fail(Errc::validation, "grid.delta_u must be finite");
    if (c.runs < 1)
        fail(Errc::validation, "runs must be >= 1");
    if (c.samples < 1)
        fail(Errc::validation, "samples must be >= 1");
    if (!(c.calibration_percentile > 0.0 && c.calibration_percentile <= 100.0))
        fail(Errc::validation, "f_max_calibration.percentile must lie in (0, 100]");
    if (c.calibration_samples < 1)
        fail(Errc::validation, "f_max_calibration.samples must be >= 1");
    try {
        validate(c.model_params());
    } catch (const Error &e) {
        fail(Errc::validation, std::string("model: ") + e.what());
    }
}

// =============================================================================
// JSON
// =============================================================================

namespace {

using FieldSetter = std::function<void(const json &, const std::string &)>;

void apply_object(const json &obj, const std::string &path, const std::map<std::string, FieldSetter> &fields) {
    if (!obj.is_object())
        fail(Errc::validation, (path.empty() ? std::string("config") : path) + " must be an object");
    for (const auto &[key, value] : obj.items()) {
        const std::string field = path.empty() ? key : path + "." + key;
        const auto it = fields.find(key);
        if (it == fields.end())
            fail(Errc::validation, "unknown key '" + field + "'");
        it->second(value, field);
    }
}

double as_number(const json &v, const std::string &path) {
    if (!v.is_number())
        fail(Errc::validation, path + " must be a number");
    return v.get<double>();
}

FieldSetter number(double &target) {
    return [&target](const json &v, const std::string &path) { target = as_number(v, path); };
}

FieldSetter integer(int &target) {
    return [&target](const json &v, const std::string &path) {
        if (!v.is_number_integer())
            fail(Errc::validation, path + " must be an integer");
        target = v.get<int>();
    };
}

FieldSetter number_list(std::vector<double> &target) {
    return [&target](const json &v, const std::string &path) {
        if (!v.is_array())
            fail(Errc::validation, path + " must be an array of numbers");
        target.clear();
        for (std::size_t i = 0; i < v.size(); ++i)
            target.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    };
}

} // namespace

SimConfig sim_config_from_json_text(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error &e) {
        fail(Errc::parse, "config: " + describe_offset(text, e.byte) + ": " + e.what());
    }

    SimConfig c;
    const std::map<std::string, FieldSetter> model = {
        {"max_speed_px_per_s", number(c.max_speed_px_per_s)},
        {"frame_rate_hz", number(c.frame_rate_hz)},
        {"u_current", number(c.u_current)},
        {"delta_u_internal", number(c.delta_u_internal)},
        {"delta_u_actual", number(c.delta_u_actual)},
        {"sigma_u2_internal", number(c.sigma_u2_internal)},
        {"sigma_u2_actual", number(c.sigma_u2_actual)},
        {"sigma_x2_internal_px2", number(c.sigma_x2_internal_px2)},
        {"sigma_x2_actual_px2", number(c.sigma_x2_actual_px2)},
        {"sigma_y2_px2", number(c.sigma_y2_px2)},
        {"sigma_z2_px2", number(c.sigma_z2_px2)},
        {"sigma_p2_px2", number(c.sigma_p2_px2)},
        {"e_max_px", number(c.e_max_px)},
        {"f_max",
         [&c](const json &v, const std::string &path) {
             if (v.is_string() && v.get<std::string>() == "auto")
                 c.f_max.reset();
             else if (v.is_number())
                 c.f_max = v.get<double>();
             else
                 fail(Errc::validation, path + " must be \"auto\" or a number");
         }},
    };
    const std::map<std::string, FieldSetter> grid = {
        {"delay_means_ms", number_list(c.delay_means_ms)},
        {"delay_vars_ms2", number_list(c.delay_vars_ms2)},
        {"wand",
         [&c](const json &v, const std::string &path) {
             if (!v.is_array())
                 fail(Errc::validation, path + " must be an array of booleans");
             c.wand.clear();
             for (std::size_t i = 0; i < v.size(); ++i) {
                 if (!v[i].is_boolean())
                     fail(Errc::validation, path + "[" + std::to_string(i) + "] must be a boolean");
                 c.wand.push_back(v[i].get<bool>());
             }
         }},
        {"delta_u",
         [&c](const json &v, const std::string &path) {
             if (v.is_null())
                 c.grid_delta_u.reset();
             else
                 c.grid_delta_u = as_number(v, path);
         }},
    };
    const std::map<std::string, FieldSetter> calibration = {
        {"percentile", number(c.calibration_percentile)},
        {"samples", integer(c.calibration_samples)},
    };
    const std::map<std::string, FieldSetter> top = {
        {"model", [&](const json &v, const std::string &path) { apply_object(v, path, model); }},
        {"grid", [&](const json &v, const std::string &path) { apply_object(v, path, grid); }},
        {"f_max_calibration", [&](const json &v, const std::string &path) { apply_object(v, path, calibration); }},
        {"runs", integer(c.runs)},
        {"samples", integer(c.samples)},
        {"seed",
         [&c](const json &v, const std::string &path) {
             if (!v.is_number_unsigned())
                 fail(Errc::validation, path + " must be a non-negative integer");
             c.seed = v.get<std::uint64_t>();
         }},
        {"threads",
         [&c](const json &v, const std::string &path) {
             if (!v.is_number_unsigned())
                 fail(Errc::validation, path + " must be a non-negative integer");
             c.threads = v.get<unsigned>();
         }},
    };
    apply_object(doc, "", top);
    validate(c);
    return c;
}

SimConfig load_sim_config(const std::filesystem::path &path) {
    const std::string text = read_file(path);
    try {
        return sim_config_from_json_text(text);
    } catch (const Error &e) {
        fail(e.code(), path.string() + ": " + e.what());
    }
}

json to_json(const SimConfig &c) {
    json model = {{"max_speed_px_per_s", c.max_speed_px_per_s},
                  {"frame_rate_hz", c.frame_rate_hz},
                  {"u_current", c.u_current},
                  {"delta_u_internal", c.delta_u_internal},
                  {"delta_u_actual", c.delta_u_actual},
                  {"sigma_u2_internal", c.sigma_u2_internal},
                  {"sigma_u2_actual", c.sigma_u2_actual},
                  {"sigma_x2_internal_px2", c.sigma_x2_internal_px2},
                  {"sigma_x2_actual_px2", c.sigma_x2_actual_px2},
                  {"sigma_y2_px2", c.sigma_y2_px2},
                  {"sigma_z2_px2", c.sigma_z2_px2},
                  {"sigma_p2_px2", c.sigma_p2_px2},
                  {"e_max_px", c.e_max_px}};
    model["f_max"] = c.f_max ? json(*c.f_max) : json("auto");
    json grid = {{"delay_means_ms", c.delay_means_ms}, {"delay_vars_ms2", c.delay_vars_ms2}, {"wand", c.wand}};
    grid["delta_u"] = c.grid_delta_u ? json(*c.grid_delta_u) : json(nullptr);
    return {{"model", model},
            {"grid", grid},
            {"runs", c.runs},
            {"samples", c.samples},
            {"seed", c.seed},
            {"threads", c.threads},
            {"f_max_calibration", {{"percentile", c.calibration_percentile}, {"samples", c.calibration_samples}}}};
}

// =============================================================================
// Running and writing
// =============================================================================

SimOutput run_simulation(const SimConfig &config) {
    validate(config);
    SimOutput out;
    out.config = config;
    ModelParams params = config.model_params();
    if (config.f_max) {
        out.f_max = *config.f_max;
        out.f_max_policy = "fixed";
    } else {
        out.f_max = calibrate_f_max(params, config.calibration_condition(), config.calibration_samples,
                                    config.calibration_seed(), config.calibration_percentile);
        out.f_max_policy = "auto";
    }
    params.f_max = out.f_max;
    out.results = run_grid(config.conditions(), params, config.runs, config.samples, config.seed, config.threads);
    return out;
}

std::string SimOutput::results_csv() const {
    Table t{{"delay_mean_steps", "delay_var_steps2", "wand", "delta_u", "run", "performance", "soa"}, {}};
    const ModelParams params = config.model_params();
    t.rows.reserve(results.size());
    for (const auto &r : results) {
        const double du = r.condition.delta_u.value_or(params.delta_u_actual);
        t.rows.push_back({format_double(r.condition.delay_mean), format_double(r.condition.delay_var),
                          r.condition.wand ? "1" : "0", format_double(du), std::to_string(r.run_index),
                          format_double(r.performance), format_double(r.soa)});
    }
    return t.to_csv();
}

json SimOutput::metadata() const {
    const ModelParams p = config.model_params();
    const Condition cal = config.calibration_condition();
    json steps = {{"b_u_px_per_step", p.b_u},
                  {"ms_per_step", config.ms_per_step()},
                  {"u_current", p.u_current},
                  {"delta_u_internal", p.delta_u_internal},
                  {"delta_u_actual", p.delta_u_actual},
                  {"sigma_u2_internal", p.sigma_u2_internal},
                  {"sigma_u2_actual", p.sigma_u2_actual},
                  {"sigma_x2_internal", p.sigma_x2_internal},
                  {"sigma_x2_actual", p.sigma_x2_actual},
                  {"sigma_y2", p.sigma_y2},
                  {"sigma_z2", p.sigma_z2},
                  {"sigma_p2", p.sigma_p2},
                  {"e_max", p.e_max}};
    json conds = json::array();
    for (const auto &c : config.conditions())
        conds.push_back({{"delay_mean_steps", c.delay_mean}, {"delay_var_steps2", c.delay_var}, {"wand", c.wand}});
    json meta = {{"tool", "delaylab"},
                 {"version", DELAYLAB_VERSION},
                 {"seed", config.seed},
                 {"f_max", f_max},
                 {"f_max_policy", f_max_policy},
                 {"runs", config.runs},
                 {"samples", config.samples},
                 {"rows", results.size()},
                 {"config", to_json(config)},
                 {"model_steps", steps},
                 {"conditions", conds}};
    if (f_max_policy == "auto")
        meta["f_max_calibration"] = {{"percentile", config.calibration_percentile},
                                     {"samples", config.calibration_samples},
                                     {"seed", config.calibration_seed()},
                                     {"delay_mean_steps", cal.delay_mean},
                                     {"delay_var_steps2", cal.delay_var},
                                     {"wand", false}};
    return meta;
}

void write_simulation(const SimOutput &output, const std::filesystem::path &path) {
    write_file_atomic(path, output.results_csv());
    auto meta = path;
    meta += ".meta.json";
    write_file_atomic(meta, output.metadata().dump(2) + "\n");
}

} // namespace delaylab
