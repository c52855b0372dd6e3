#ifndef DELAYLAB_DELAYLAB_H
#define DELAYLAB_DELAYLAB_H

/*
 * delaylab C API.
 *
 * Every fallible call returns a dl_status. On failure a description is
 * available from dl_last_error_message() on the calling thread until the
 * next failing call. Strings returned through `char **` are heap copies
 * owned by the caller and released with dl_string_free(). Handles are
 * opaque and released with their *_destroy function; destroy accepts NULL.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(DELAYLAB_BUILDING)
#define DL_API __attribute__((visibility("default")))
#else
#define DL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dl_status {
    DL_OK = 0,
    DL_ERR_INVALID_ARGUMENT = 1, /* bad call arguments */
    DL_ERR_DOMAIN = 2,           /* value outside an operation's domain */
    DL_ERR_PARSE = 3,            /* malformed JSON / CSV / JSONL */
    DL_ERR_VALIDATION = 4,       /* well-formed input violating a rule */
    DL_ERR_NOT_FOUND = 5,
    DL_ERR_SEQUENCE = 6,         /* protocol step out of order */
    DL_ERR_IO = 7,               /* filesystem or network */
    DL_ERR_INTERNAL = 8
} dl_status;

DL_API const char *dl_version(void);
DL_API const char *dl_status_name(dl_status status);
DL_API const char *dl_last_error_message(void);
DL_API void dl_string_free(char *s);

/* ===================================================================== */
/* Model                                                                 */
/* ===================================================================== */

/* Steps of 10 ms; positions in px. */
typedef struct dl_model_params {
    double b_u;
    double u_current;
    double delta_u_internal;
    double delta_u_actual;
    double sigma_u2_internal;
    double sigma_u2_actual;
    double sigma_x2_internal;
    double sigma_x2_actual;
    double sigma_y2;
    double sigma_z2;
    double sigma_p2;
    double e_max;
    double f_max;
} dl_model_params;

DL_API void dl_model_params_default(dl_model_params *out);

/* after_delay = 0: horizon d; otherwise d + 1. */
DL_API dl_status dl_prediction_distribution(const dl_model_params *params, double mean, double var,
                                            long d_perceived, int after_delay, double *out_mean,
                                            double *out_var);
DL_API dl_status dl_kalman_update(double prior_mean, double prior_var, double observation, double sigma_y2,
                                  double *out_mean, double *out_var);
DL_API dl_status dl_free_energy(double delta, double s_p, double s_l, double *out);
DL_API dl_status dl_wand_prediction(const dl_model_params *params, double x_actual, double u,
                                    double d_bar_actual, int after_delay, double *out_mean, double *out_var);

typedef struct dl_rng dl_rng;

DL_API dl_status dl_rng_create(uint64_t seed, dl_rng **out);
DL_API void dl_rng_destroy(dl_rng *rng);
DL_API double dl_rng_uniform(dl_rng *rng);
DL_API double dl_rng_normal(dl_rng *rng);

typedef struct dl_episode {
    long d_actual;
    long d_perceived;
    double prediction_error;
    double operation_error;
    double free_energy;
} dl_episode;

/* One independent episode for a delay mean / variance in steps. */
DL_API dl_status dl_sample_episode(const dl_model_params *params, double delay_mean, double delay_var,
                                   int wand, dl_rng *rng, dl_episode *out);

/* ===================================================================== */
/* Simulation                                                            */
/* ===================================================================== */

typedef struct dl_sim_config dl_sim_config;
typedef struct dl_sim_output dl_sim_output;

typedef struct dl_sim_row {
    double delay_mean_steps;
    double delay_var_steps2;
    int wand;
    double delta_u;
    int run;
    double performance;
    double soa;
} dl_sim_row;

DL_API dl_status dl_sim_config_default(dl_sim_config **out);
DL_API dl_status dl_sim_config_load(const char *path, dl_sim_config **out);
DL_API dl_status dl_sim_config_parse(const char *json_text, dl_sim_config **out);
DL_API void dl_sim_config_destroy(dl_sim_config *config);
DL_API dl_status dl_sim_config_set_seed(dl_sim_config *config, uint64_t seed);
/* Input trend applied to every grid cell (real and internal). */
DL_API dl_status dl_sim_config_set_delta_u(dl_sim_config *config, double delta_u);
DL_API dl_status dl_sim_config_set_runs(dl_sim_config *config, int runs, int samples);
DL_API dl_status dl_sim_config_get_runs(const dl_sim_config *config, int *runs, int *samples);
DL_API dl_status dl_sim_config_set_threads(dl_sim_config *config, unsigned threads);
/* Pretty-printed effective configuration. */
DL_API dl_status dl_sim_config_to_json(const dl_sim_config *config, char **out);

DL_API dl_status dl_simulate(const dl_sim_config *config, dl_sim_output **out);
DL_API void dl_sim_output_destroy(dl_sim_output *output);
DL_API size_t dl_sim_output_row_count(const dl_sim_output *output);
DL_API dl_status dl_sim_output_row(const dl_sim_output *output, size_t index, dl_sim_row *out);
DL_API double dl_sim_output_f_max(const dl_sim_output *output);
DL_API dl_status dl_sim_output_csv(const dl_sim_output *output, char **out);
/* Writes `path` and `path`.meta.json. */
DL_API dl_status dl_sim_output_write(const dl_sim_output *output, const char *path);

/* ===================================================================== */
/* Tables, ANOVA, figures                                                */
/* ===================================================================== */

typedef struct dl_table dl_table;
typedef struct dl_anova dl_anova;

DL_API dl_status dl_table_load_csv(const char *path, dl_table **out);
DL_API dl_status dl_table_parse_csv(const char *text, dl_table **out);
DL_API void dl_table_destroy(dl_table *table);
DL_API size_t dl_table_row_count(const dl_table *table);
/* Non-zero when the table has the column. */
DL_API int dl_table_has_column(const dl_table *table, const char *name);

typedef struct dl_anova_request {
    const char *response;
    const char *const *factors;
    size_t n_factors;
    /* Exact-match filters: rows kept when column where_columns[i] equals where_values[i]. */
    const char *const *where_columns;
    const char *const *where_values;
    size_t n_where;
    int max_order;      /* <= 0: all interactions */
    int keep_excluded;  /* non-zero keeps rows flagged excluded=1 */
} dl_anova_request;

typedef struct dl_anova_row {
    const char *effect; /* valid while the dl_anova lives */
    double df;
    double ss;
    double ms;
    int has_f;
    double f;
    int has_p;
    double p;
    int p_underflow;
} dl_anova_row;

DL_API dl_status dl_anova_run(const dl_table *table, const dl_anova_request *request, dl_anova **out);
DL_API void dl_anova_destroy(dl_anova *anova);
DL_API size_t dl_anova_row_count(const dl_anova *anova);
DL_API dl_status dl_anova_row_at(const dl_anova *anova, size_t index, dl_anova_row *out);
DL_API dl_status dl_anova_to_csv(const dl_anova *anova, char **out);
DL_API dl_status dl_anova_summary(const dl_anova *anova, char **out);

DL_API dl_status dl_f_distribution_sf(double f, double df1, double df2, double *out);

/* figure: 4, 5 or 11. */
DL_API dl_status dl_figure_csv(const dl_table *results, int figure, char **out);

/* ===================================================================== */
/* Task and protocol                                                     */
/* ===================================================================== */

typedef struct dl_score_report {
    double score;            /* from course geometry */
    double logged_score;     /* from the log's own inside flags */
    size_t frames;
    size_t flag_disagreements;
} dl_score_report;

DL_API dl_status dl_score_frames_file(const char *frames_path, const char *course_path, dl_score_report *out);

/* Default course documents as a JSON array. */
DL_API dl_status dl_default_courses_json(char **out);

/* Headless run on a course document with a lookahead controller.
 * gain in (0, 1]; hand noise SD in input units; compensate != 0 makes the
 * controller account for its own inputs still in the channel. Writes JSONL. */
DL_API dl_status dl_run_task_jsonl(const char *course_json, double delay_mean_ms, double delay_var_ms2,
                                   uint64_t channel_seed, double gain, uint64_t noise_seed, double noise_sd,
                                   int compensate, char **out);

DL_API dl_status dl_plan_json(const char *participant_id, int participant_index, uint64_t seed, char **out);

/* ===================================================================== */
/* Session service                                                       */
/* ===================================================================== */

typedef struct dl_server dl_server;

/* Port 0 picks a free port; see dl_server_port. */
DL_API dl_status dl_server_start(const char *data_dir, const char *host, int port, dl_server **out);
DL_API int dl_server_port(const dl_server *server);
/* Blocks until the server stops. */
DL_API void dl_server_wait(dl_server *server);
DL_API void dl_server_stop(dl_server *server);
DL_API void dl_server_destroy(dl_server *server);

#ifdef __cplusplus
}
#endif

#endif
