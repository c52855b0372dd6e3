#include <delaylab/delaylab.h>

#include "errors.hpp"
#include "figure.hpp"
#include "model.hpp"
#include "montecarlo.hpp"
#include "protocol.hpp"
#include "service.hpp"
#include "simconfig.hpp"
#include "stats.hpp"
#include "task.hpp"
#include "util.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

using namespace delaylab;

struct dl_rng {
    Rng rng;
};

struct dl_sim_config {
    SimConfig config;
};

struct dl_sim_output {
    SimOutput output;
};

struct dl_table {
    Table table;
};

struct dl_anova {
    AnovaTable table;
};

struct dl_server {
    std::unique_ptr<Service> service;
};

namespace {

thread_local std::string g_last_error;

dl_status to_status(Errc c) {
    switch (c) {
    case Errc::invalid_argument: return DL_ERR_INVALID_ARGUMENT;
    case Errc::domain: return DL_ERR_DOMAIN;
    case Errc::parse: return DL_ERR_PARSE;
    case Errc::validation: return DL_ERR_VALIDATION;
    case Errc::not_found: return DL_ERR_NOT_FOUND;
    case Errc::sequence: return DL_ERR_SEQUENCE;
    case Errc::io: return DL_ERR_IO;
    }
    return DL_ERR_INTERNAL;
}

template <class F>
dl_status guarded(F &&body) {
    try {
        body();
        return DL_OK;
    } catch (const Error &e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc &) {
        g_last_error = "out of memory";
        return DL_ERR_INTERNAL;
    } catch (const std::exception &e) {
        g_last_error = e.what();
        return DL_ERR_INTERNAL;
    }
}

void need(const void *p, const char *what) {
    if (!p)
        fail(Errc::invalid_argument, std::string(what) + " must not be NULL");
}

char *dup(const std::string &s) {
    char *out = static_cast<char *>(std::malloc(s.size() + 1));
    if (!out)
        throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

ModelParams from_c(const dl_model_params &c) {
    ModelParams p;
    p.b_u = c.b_u;
    p.u_current = c.u_current;
    p.delta_u_internal = c.delta_u_internal;
    p.delta_u_actual = c.delta_u_actual;
    p.sigma_u2_internal = c.sigma_u2_internal;
    p.sigma_u2_actual = c.sigma_u2_actual;
    p.sigma_x2_internal = c.sigma_x2_internal;
    p.sigma_x2_actual = c.sigma_x2_actual;
    p.sigma_y2 = c.sigma_y2;
    p.sigma_z2 = c.sigma_z2;
    p.sigma_p2 = c.sigma_p2;
    p.e_max = c.e_max;
    p.f_max = c.f_max;
    return p;
}

Horizon horizon(int after_delay) { return after_delay ? Horizon::after_delay : Horizon::at_delay; }

} // namespace

extern "C" {

const char *dl_version(void) { return DELAYLAB_VERSION; }

const char *dl_status_name(dl_status s) {
    switch (s) {
    case DL_OK: return "ok";
    case DL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DL_ERR_DOMAIN: return "domain";
    case DL_ERR_PARSE: return "parse";
    case DL_ERR_VALIDATION: return "validation";
    case DL_ERR_NOT_FOUND: return "not_found";
    case DL_ERR_SEQUENCE: return "sequence";
    case DL_ERR_IO: return "io";
    case DL_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char *dl_last_error_message(void) { return g_last_error.c_str(); }

void dl_string_free(char *s) { std::free(s); }

// =============================================================================
// Model
// =============================================================================

void dl_model_params_default(dl_model_params *out) {
    if (!out)
        return;
    const ModelParams p;
    *out = {p.b_u,          p.u_current,       p.delta_u_internal, p.delta_u_actual, p.sigma_u2_internal,
            p.sigma_u2_actual, p.sigma_x2_internal, p.sigma_x2_actual, p.sigma_y2,    p.sigma_z2,
            p.sigma_p2,     p.e_max,           p.f_max};
}

dl_status dl_prediction_distribution(const dl_model_params *params, double mean, double var, long d,
                                     int after_delay, double *out_mean, double *out_var) {
    return guarded([&] {
        need(params, "params");
        need(out_mean, "out_mean");
        need(out_var, "out_var");
        const auto b = prediction_distribution(from_c(*params), {mean, var}, d, horizon(after_delay));
        *out_mean = b.mean;
        *out_var = b.var;
    });
}

dl_status dl_kalman_update(double prior_mean, double prior_var, double observation, double sigma_y2,
                           double *out_mean, double *out_var) {
    return guarded([&] {
        need(out_mean, "out_mean");
        need(out_var, "out_var");
        const auto b = kalman_update({prior_mean, prior_var}, observation, sigma_y2);
        *out_mean = b.mean;
        *out_var = b.var;
    });
}

dl_status dl_free_energy(double delta, double s_p, double s_l, double *out) {
    return guarded([&] {
        need(out, "out");
        *out = free_energy({delta, s_p, s_l});
    });
}

dl_status dl_wand_prediction(const dl_model_params *params, double x_actual, double u, double d_bar_actual,
                             int after_delay, double *out_mean, double *out_var) {
    return guarded([&] {
        need(params, "params");
        need(out_mean, "out_mean");
        need(out_var, "out_var");
        const auto b = wand_prediction(from_c(*params), x_actual, u, d_bar_actual, horizon(after_delay));
        *out_mean = b.mean;
        *out_var = b.var;
    });
}

dl_status dl_rng_create(uint64_t seed, dl_rng **out) {
    return guarded([&] {
        need(out, "out");
        *out = new dl_rng{Rng(seed)};
    });
}

void dl_rng_destroy(dl_rng *rng) { delete rng; }
double dl_rng_uniform(dl_rng *rng) { return rng ? rng->rng.uniform() : 0.0; }
double dl_rng_normal(dl_rng *rng) { return rng ? rng->rng.normal() : 0.0; }

dl_status dl_sample_episode(const dl_model_params *params, double delay_mean, double delay_var, int wand,
                            dl_rng *rng, dl_episode *out) {
    return guarded([&] {
        need(params, "params");
        need(rng, "rng");
        need(out, "out");
        const ModelParams p = from_c(*params);
        validate(p);
        const Condition c{delay_mean, delay_var, wand != 0, std::nullopt};
        // Replays sample_episode's draw order so the delays can be reported.
        Rng probe = rng->rng;
        const DelayDraw draw = draw_delays(DelaySpec::same(delay_mean, delay_var), probe);
        const ErrorSample s = sample_episode(p, c, rng->rng);
        *out = {draw.d_actual, draw.d_perceived, s.prediction_error, s.operation_error, s.free_energy};
    });
}

// =============================================================================
// Simulation
// =============================================================================

dl_status dl_sim_config_default(dl_sim_config **out) {
    return guarded([&] {
        need(out, "out");
        *out = new dl_sim_config{SimConfig{}};
    });
}

dl_status dl_sim_config_load(const char *path, dl_sim_config **out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new dl_sim_config{load_sim_config(path)};
    });
}

dl_status dl_sim_config_parse(const char *json_text, dl_sim_config **out) {
    return guarded([&] {
        need(json_text, "json_text");
        need(out, "out");
        *out = new dl_sim_config{sim_config_from_json_text(json_text)};
    });
}

void dl_sim_config_destroy(dl_sim_config *config) { delete config; }

dl_status dl_sim_config_set_seed(dl_sim_config *config, uint64_t seed) {
    return guarded([&] {
        need(config, "config");
        config->config.seed = seed;
    });
}

dl_status dl_sim_config_set_delta_u(dl_sim_config *config, double delta_u) {
    return guarded([&] {
        need(config, "config");
        SimConfig c = config->config;
        c.grid_delta_u = delta_u;
        validate(c);
        config->config = c;
    });
}

dl_status dl_sim_config_set_runs(dl_sim_config *config, int runs, int samples) {
    return guarded([&] {
        need(config, "config");
        SimConfig c = config->config;
        c.runs = runs;
        c.samples = samples;
        validate(c);
        config->config = c;
    });
}

dl_status dl_sim_config_get_runs(const dl_sim_config *config, int *runs, int *samples) {
    return guarded([&] {
        need(config, "config");
        need(runs, "runs");
        need(samples, "samples");
        *runs = config->config.runs;
        *samples = config->config.samples;
    });
}

dl_status dl_sim_config_set_threads(dl_sim_config *config, unsigned threads) {
    return guarded([&] {
        need(config, "config");
        config->config.threads = threads;
    });
}

dl_status dl_sim_config_to_json(const dl_sim_config *config, char **out) {
    return guarded([&] {
        need(config, "config");
        need(out, "out");
        *out = dup(to_json(config->config).dump(2) + "\n");
    });
}

dl_status dl_simulate(const dl_sim_config *config, dl_sim_output **out) {
    return guarded([&] {
        need(config, "config");
        need(out, "out");
        *out = new dl_sim_output{run_simulation(config->config)};
    });
}

void dl_sim_output_destroy(dl_sim_output *output) { delete output; }

size_t dl_sim_output_row_count(const dl_sim_output *output) { return output ? output->output.results.size() : 0; }

dl_status dl_sim_output_row(const dl_sim_output *output, size_t index, dl_sim_row *out) {
    return guarded([&] {
        need(output, "output");
        need(out, "out");
        const auto &results = output->output.results;
        if (index >= results.size())
            fail(Errc::invalid_argument, "row index out of range");
        const RunResult &r = results[index];
        const double du = r.condition.delta_u.value_or(output->output.config.delta_u_actual);
        *out = {r.condition.delay_mean, r.condition.delay_var, r.condition.wand ? 1 : 0, du,
                r.run_index,            r.performance,         r.soa};
    });
}

double dl_sim_output_f_max(const dl_sim_output *output) { return output ? output->output.f_max : 0.0; }

dl_status dl_sim_output_csv(const dl_sim_output *output, char **out) {
    return guarded([&] {
        need(output, "output");
        need(out, "out");
        *out = dup(output->output.results_csv());
    });
}

dl_status dl_sim_output_write(const dl_sim_output *output, const char *path) {
    return guarded([&] {
        need(output, "output");
        need(path, "path");
        write_simulation(output->output, path);
    });
}

// =============================================================================
// Tables, ANOVA, figures
// =============================================================================

dl_status dl_table_load_csv(const char *path, dl_table **out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new dl_table{Table::load_csv(path)};
    });
}

dl_status dl_table_parse_csv(const char *text, dl_table **out) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        *out = new dl_table{Table::parse_csv(text)};
    });
}

void dl_table_destroy(dl_table *table) { delete table; }

size_t dl_table_row_count(const dl_table *table) { return table ? table->table.rows.size() : 0; }

int dl_table_has_column(const dl_table *table, const char *name) {
    return table && name && table->table.column(name).has_value() ? 1 : 0;
}

dl_status dl_anova_run(const dl_table *table, const dl_anova_request *req, dl_anova **out) {
    return guarded([&] {
        need(table, "table");
        need(req, "request");
        need(req->response, "request.response");
        need(out, "out");
        TableSelection sel;
        sel.response = req->response;
        for (size_t i = 0; i < req->n_factors; ++i) {
            need(req->factors, "request.factors");
            need(req->factors[i], "request.factors[i]");
            sel.factors.emplace_back(req->factors[i]);
        }
        for (size_t i = 0; i < req->n_where; ++i) {
            need(req->where_columns, "request.where_columns");
            need(req->where_values, "request.where_values");
            need(req->where_columns[i], "request.where_columns[i]");
            need(req->where_values[i], "request.where_values[i]");
            sel.where.emplace_back(req->where_columns[i], req->where_values[i]);
        }
        sel.drop_excluded = req->keep_excluded == 0;
        const FactorialDataset data = dataset_from_table(table->table, sel);
        const int order = req->max_order > 0 ? req->max_order : static_cast<int>(sel.factors.size());
        *out = new dl_anova{anova(data, order)};
    });
}

void dl_anova_destroy(dl_anova *a) { delete a; }

size_t dl_anova_row_count(const dl_anova *a) { return a ? a->table.rows.size() : 0; }

dl_status dl_anova_row_at(const dl_anova *a, size_t index, dl_anova_row *out) {
    return guarded([&] {
        need(a, "anova");
        need(out, "out");
        if (index >= a->table.rows.size())
            fail(Errc::invalid_argument, "row index out of range");
        const AnovaRow &r = a->table.rows[index];
        *out = {r.effect.c_str(), r.df, r.ss, r.ms, r.f.has_value(), r.f.value_or(0.0),
                r.p.has_value(), r.p.value_or(0.0), r.p_underflow ? 1 : 0};
    });
}

dl_status dl_anova_to_csv(const dl_anova *a, char **out) {
    return guarded([&] {
        need(a, "anova");
        need(out, "out");
        *out = dup(a->table.to_csv());
    });
}

dl_status dl_anova_summary(const dl_anova *a, char **out) {
    return guarded([&] {
        need(a, "anova");
        need(out, "out");
        *out = dup(a->table.summary());
    });
}

dl_status dl_f_distribution_sf(double f, double df1, double df2, double *out) {
    return guarded([&] {
        need(out, "out");
        *out = f_distribution_sf(f, df1, df2);
    });
}

dl_status dl_figure_csv(const dl_table *results, int figure, char **out) {
    return guarded([&] {
        need(results, "results");
        need(out, "out");
        *out = dup(figure_table(results->table, figure).to_csv());
    });
}

// =============================================================================
// Task and protocol
// =============================================================================

dl_status dl_score_frames_file(const char *frames_path, const char *course_path, dl_score_report *out) {
    return guarded([&] {
        need(frames_path, "frames_path");
        need(course_path, "course_path");
        need(out, "out");
        const std::string course_text = read_file(course_path);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(course_text);
        } catch (const nlohmann::json::parse_error &e) {
            fail(Errc::parse, std::string(course_path) + ": " + describe_offset(course_text, e.byte) + ": " + e.what());
        }
        const Course course = course_from_json(doc);
        const auto frames = frames_from_jsonl(read_file(frames_path));
        validate_frame_log(frames, course);
        const auto graded = regrade(frames, course);
        size_t disagreements = 0;
        for (size_t i = 0; i < frames.size(); ++i)
            disagreements += frames[i].inside != graded[i].inside;
        *out = {score_run(graded), score_run(frames), frames.size(), disagreements};
    });
}

dl_status dl_default_courses_json(char **out) {
    return guarded([&] {
        need(out, "out");
        nlohmann::json arr = nlohmann::json::array();
        for (const auto &c : default_courses())
            arr.push_back(to_json(c));
        *out = dup(arr.dump(2) + "\n");
    });
}

dl_status dl_run_task_jsonl(const char *course_json, double delay_mean_ms, double delay_var_ms2,
                            uint64_t channel_seed, double gain, uint64_t noise_seed, double noise_sd, int compensate,
                            char **out) {
    return guarded([&] {
        need(course_json, "course_json");
        need(out, "out");
        if (!(delay_mean_ms >= 0.0) || !(delay_var_ms2 >= 0.0))
            fail(Errc::invalid_argument, "delay mean and variance must be >= 0");
        if (!(gain > 0.0 && gain <= 1.0))
            fail(Errc::invalid_argument, "gain must lie in (0, 1]");
        if (!(noise_sd >= 0.0))
            fail(Errc::invalid_argument, "noise_sd must be >= 0");
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(course_json);
        } catch (const nlohmann::json::parse_error &e) {
            fail(Errc::parse, std::string("course: ") + e.what());
        }
        const Course course = course_from_json(doc);
        const auto frames = run_task(course, {delay_mean_ms, delay_var_ms2}, channel_seed,
                                     lookahead_controller(gain, noise_seed, noise_sd, compensate != 0));
        *out = dup(frames_to_jsonl(frames));
    });
}

dl_status dl_plan_json(const char *participant_id, int participant_index, uint64_t seed, char **out) {
    return guarded([&] {
        need(participant_id, "participant_id");
        need(out, "out");
        const SessionPlan plan = build_plan(participant_id, participant_index, seed);
        *out = dup(to_json(plan).dump(2) + "\n");
    });
}

// =============================================================================
// Session service
// =============================================================================

dl_status dl_server_start(const char *data_dir, const char *host, int port, dl_server **out) {
    return guarded([&] {
        need(data_dir, "data_dir");
        need(out, "out");
        auto server = std::make_unique<dl_server>();
        server->service = std::make_unique<Service>(data_dir);
        server->service->start(host ? host : "127.0.0.1", port);
        *out = server.release();
    });
}

int dl_server_port(const dl_server *server) { return server ? server->service->port() : -1; }

void dl_server_wait(dl_server *server) {
    if (server)
        server->service->wait();
}

void dl_server_stop(dl_server *server) {
    if (server)
        server->service->stop();
}

void dl_server_destroy(dl_server *server) { delete server; }

} // extern "C"
