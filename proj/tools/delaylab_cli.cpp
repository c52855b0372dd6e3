// delaylab command-line tool. Talks to the library only through the C API.
//
// Exit codes: 0 success, 1 environment error (I/O, network), 2 input error.

#include <delaylab/delaylab.h>

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEnvironment = 1;
constexpr int kExitInput = 2;

struct Failure {
    int exit_code;
};

int exit_code_for(dl_status s) {
    if (s == DL_OK)
        return kExitOk;
    return (s == DL_ERR_IO || s == DL_ERR_INTERNAL) ? kExitEnvironment : kExitInput;
}

void check(dl_status s, const std::string &context) {
    if (s == DL_OK)
        return;
    std::cerr << "delaylab: " << context << ": " << dl_last_error_message() << " [" << dl_status_name(s) << "]\n";
    throw Failure{exit_code_for(s)};
}

void input_error(const std::string &message) {
    std::cerr << "delaylab: " << message << "\n";
    throw Failure{kExitInput};
}

// Owning wrappers for the C handles and strings.
struct StrFree {
    void operator()(char *s) const { dl_string_free(s); }
};
using CStr = std::unique_ptr<char, StrFree>;

template <class T, void (*Destroy)(T *)>
struct Deleter {
    void operator()(T *p) const { Destroy(p); }
};
using ConfigPtr = std::unique_ptr<dl_sim_config, Deleter<dl_sim_config, dl_sim_config_destroy>>;
using OutputPtr = std::unique_ptr<dl_sim_output, Deleter<dl_sim_output, dl_sim_output_destroy>>;
using TablePtr = std::unique_ptr<dl_table, Deleter<dl_table, dl_table_destroy>>;
using AnovaPtr = std::unique_ptr<dl_anova, Deleter<dl_anova, dl_anova_destroy>>;
using ServerPtr = std::unique_ptr<dl_server, Deleter<dl_server, dl_server_destroy>>;

void write_text(const std::string &path, const std::string &text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) {
        std::cerr << "delaylab: cannot write " << path << "\n";
        throw Failure{kExitEnvironment};
    }
}

std::string read_text(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "delaylab: cannot read " << path << "\n";
        throw Failure{kExitEnvironment};
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TablePtr load_table(const std::string &path) {
    dl_table *t = nullptr;
    check(dl_table_load_csv(path.c_str(), &t), path);
    return TablePtr(t);
}

// Short factor/response names resolve to whichever column the table has:
// simulation results use step units, study exports use ms.
std::string resolve_column(const dl_table *table, const std::string &name,
                           const std::vector<std::vector<std::string>> &aliases) {
    if (dl_table_has_column(table, name.c_str()))
        return name;
    for (const auto &group : aliases) {
        if (group.front() != name)
            continue;
        for (std::size_t i = 1; i < group.size(); ++i)
            if (dl_table_has_column(table, group[i].c_str()))
                return group[i];
    }
    return name; // let the library report the missing column with the list of columns
}

const std::vector<std::vector<std::string>> kFactorAliases = {
    {"delay", "delay_mean_steps", "delay_mean_ms"},
    {"variance", "delay_var_steps2", "delay_var_ms2"},
    {"wand", "wand"},
    {"participant", "participant_id"},
    {"course", "course_id"},
};

const std::vector<std::vector<std::string>> kResponseAliases = {
    {"performance", "performance", "score"},
    {"soa", "soa", "q1"},
    {"desired", "q2"},
};

std::vector<std::string> split(const std::string &text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == sep) {
            if (!cur.empty())
                out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty())
        out.push_back(cur);
    return out;
}

// =============================================================================
// Commands
// =============================================================================

struct SimulateArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<double> delta_u;
    std::optional<int> runs;
    std::optional<int> samples;
    std::optional<unsigned> threads;
};

int cmd_simulate(const SimulateArgs &a) {
    dl_sim_config *raw = nullptr;
    if (a.config.empty())
        check(dl_sim_config_default(&raw), "default config");
    else
        check(dl_sim_config_load(a.config.c_str(), &raw), "config");
    ConfigPtr cfg(raw);
    if (a.seed)
        check(dl_sim_config_set_seed(cfg.get(), *a.seed), "--seed");
    if (a.delta_u)
        check(dl_sim_config_set_delta_u(cfg.get(), *a.delta_u), "--delta-u");
    if (a.runs || a.samples) {
        int runs = 0, samples = 0;
        check(dl_sim_config_get_runs(cfg.get(), &runs, &samples), "config");
        check(dl_sim_config_set_runs(cfg.get(), a.runs.value_or(runs), a.samples.value_or(samples)), "--runs/--samples");
    }
    if (a.threads)
        check(dl_sim_config_set_threads(cfg.get(), *a.threads), "--threads");

    dl_sim_output *out_raw = nullptr;
    check(dl_simulate(cfg.get(), &out_raw), "simulate");
    OutputPtr out(out_raw);
    check(dl_sim_output_write(out.get(), a.out.c_str()), a.out);
    std::cout << "wrote " << dl_sim_output_row_count(out.get()) << " rows to " << a.out << " (F_max "
              << dl_sim_output_f_max(out.get()) << ")\n";
    return kExitOk;
}

struct AnovaArgs {
    std::string results;
    std::string response = "performance";
    std::string factors = "delay,variance,wand";
    std::vector<std::string> where;
    int max_order = 0;
    bool keep_excluded = false;
    std::string out;
};

int cmd_anova(const AnovaArgs &a) {
    TablePtr table = load_table(a.results);
    const std::string response = resolve_column(table.get(), a.response, kResponseAliases);
    std::vector<std::string> factors;
    for (const auto &f : split(a.factors, ','))
        factors.push_back(resolve_column(table.get(), f, kFactorAliases));
    if (factors.empty())
        input_error("--factors needs at least one factor");
    std::vector<std::string> where_cols, where_vals;
    for (const auto &w : a.where) {
        const auto eq = w.find('=');
        if (eq == std::string::npos || eq == 0)
            input_error("--where expects column=value, got '" + w + "'");
        where_cols.push_back(w.substr(0, eq));
        where_vals.push_back(w.substr(eq + 1));
    }
    std::vector<const char *> fptr, wc, wv;
    for (const auto &f : factors)
        fptr.push_back(f.c_str());
    for (std::size_t i = 0; i < where_cols.size(); ++i) {
        wc.push_back(where_cols[i].c_str());
        wv.push_back(where_vals[i].c_str());
    }
    dl_anova_request req{response.c_str(), fptr.data(), fptr.size(), wc.data(), wv.data(), wc.size(),
                         a.max_order, a.keep_excluded ? 1 : 0};
    dl_anova *raw = nullptr;
    check(dl_anova_run(table.get(), &req, &raw), "anova");
    AnovaPtr result(raw);
    char *csv = nullptr, *summary = nullptr;
    check(dl_anova_to_csv(result.get(), &csv), "anova");
    CStr csv_owner(csv);
    check(dl_anova_summary(result.get(), &summary), "anova");
    CStr summary_owner(summary);
    if (a.out.empty() || a.out == "-") {
        std::cout << csv;
        std::cerr << summary;
    } else {
        write_text(a.out, csv);
        std::cout << summary;
    }
    return kExitOk;
}

int cmd_figure(const std::string &results, int figure, const std::string &out) {
    TablePtr table = load_table(results);
    char *csv = nullptr;
    check(dl_figure_csv(table.get(), figure, &csv), "figure " + std::to_string(figure));
    CStr owner(csv);
    write_text(out, csv);
    return kExitOk;
}

int cmd_score(const std::string &frames, const std::string &course) {
    dl_score_report report{};
    check(dl_score_frames_file(frames.c_str(), course.c_str(), &report), frames);
    if (report.flag_disagreements > 0)
        std::cerr << "delaylab: warning: " << report.flag_disagreements
                  << " frames carry an inside flag that disagrees with the course geometry (logged score "
                  << report.logged_score << ")\n";
    std::cout << report.score << "\n";
    return kExitOk;
}

int cmd_plan(const std::string &participant, int index, std::uint64_t seed, const std::string &out) {
    char *json = nullptr;
    check(dl_plan_json(participant.c_str(), index, seed, &json), "plan");
    CStr owner(json);
    write_text(out, json);
    return kExitOk;
}

int cmd_courses(const std::string &out) {
    char *json = nullptr;
    check(dl_default_courses_json(&json), "courses");
    CStr owner(json);
    write_text(out, json);
    return kExitOk;
}

struct TrackArgs {
    std::string course;
    double delay_ms = 0.0;
    double var_ms2 = 0.0;
    std::uint64_t seed = 1;
    double gain = 0.2;
    double noise_sd = 0.0;
    bool no_compensate = false;
    std::string out;
};

int cmd_track(const TrackArgs &a) {
    const std::string course = read_text(a.course);
    char *jsonl = nullptr;
    check(dl_run_task_jsonl(course.c_str(), a.delay_ms, a.var_ms2, a.seed, a.gain, a.seed + 1, a.noise_sd,
                            a.no_compensate ? 0 : 1, &jsonl),
          "track");
    CStr owner(jsonl);
    write_text(a.out, jsonl);
    return kExitOk;
}

int cmd_serve(int port, const std::string &data, const std::string &host) {
    // Block the stop signals before any server thread exists so that only
    // this thread receives them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    dl_server *raw = nullptr;
    check(dl_server_start(data.c_str(), host.c_str(), port, &raw), "serve");
    ServerPtr server(raw);
    std::cout << "listening on http://" << host << ":" << dl_server_port(server.get()) << " (data " << data << ")"
              << std::endl;
    int sig = 0;
    sigwait(&set, &sig);
    dl_server_stop(server.get());
    return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"delaylab: delayed-operation model, simulation, analysis and experiment service"};
    app.set_version_flag("--version", std::string(dl_version()));
    app.require_subcommand(1);

    SimulateArgs sim;
    auto *simulate = app.add_subcommand("simulate", "Run the Monte Carlo condition grid");
    simulate->add_option("--config", sim.config, "JSON configuration (physical units); defaults when omitted");
    simulate->add_option("--out", sim.out, "Results CSV; metadata goes to <out>.meta.json")->required();
    simulate->add_option("--seed", sim.seed, "Master seed override");
    simulate->add_option("--delta-u", sim.delta_u, "Input change per step for every grid cell");
    simulate->add_option("--runs", sim.runs, "Runs per condition");
    simulate->add_option("--samples", sim.samples, "Samples per run");
    simulate->add_option("--threads", sim.threads, "Worker threads (0: all cores)");

    AnovaArgs an;
    auto *anova = app.add_subcommand("anova", "Factorial ANOVA on a results or export table");
    anova->add_option("results", an.results, "CSV table")->required();
    anova->add_option("--response", an.response, "performance | soa | desired | column name")
        ->capture_default_str();
    anova->add_option("--factors", an.factors, "Comma-separated factors (delay, variance, wand or column names)")
        ->capture_default_str();
    anova->add_option("--where", an.where, "Row filter column=value (repeatable)");
    anova->add_option("--max-order", an.max_order, "Highest interaction order kept (0: all)");
    anova->add_flag("--keep-excluded", an.keep_excluded, "Keep rows flagged excluded=1");
    anova->add_option("--out", an.out, "Write the ANOVA CSV here and print the summary");

    std::string fig_results, fig_out;
    int figure = 4;
    auto *fig = app.add_subcommand("figure", "Per-condition means and standard errors for a figure");
    fig->add_option("results", fig_results, "Results CSV")->required();
    fig->add_option("--figure", figure, "4, 5 or 11")->required();
    fig->add_option("--out", fig_out, "Output CSV (stdout when omitted)");

    std::string frames_path, course_path;
    auto *score = app.add_subcommand("score", "Score a frame log against its course");
    score->add_option("--frames", frames_path, "Frame log (JSONL)")->required();
    score->add_option("--course", course_path, "Course document (JSON)")->required();

    std::string participant = "P01", plan_out;
    int index = 0;
    std::uint64_t plan_seed = 1;
    auto *plan = app.add_subcommand("plan", "Print the session plan of a participant");
    plan->add_option("--participant", participant, "Participant id")->capture_default_str();
    plan->add_option("--index", index, "Participant index (counterbalancing row)")->capture_default_str();
    plan->add_option("--seed", plan_seed, "Session seed")->capture_default_str();
    plan->add_option("--out", plan_out, "Output file (stdout when omitted)");

    int port = 8080;
    std::string data_dir = "data", host = "127.0.0.1";
    auto *serve = app.add_subcommand("serve", "Run the experiment session service");
    serve->add_option("--port", port, "TCP port (0: any free port)")->capture_default_str();
    serve->add_option("--data", data_dir, "Data directory")->capture_default_str();
    serve->add_option("--host", host, "Bind address")->capture_default_str();

    std::string courses_out;
    auto *courses = app.add_subcommand("courses", "Print the default course documents");
    courses->add_option("--out", courses_out, "Output file (stdout when omitted)");

    TrackArgs tr;
    auto *track = app.add_subcommand("track", "Headless run of a scripted controller, frame log as JSONL");
    track->add_option("--course", tr.course, "Course document (JSON)")->required();
    track->add_option("--delay-ms", tr.delay_ms, "Delay mean (ms)");
    track->add_option("--var-ms2", tr.var_ms2, "Delay variance (ms^2)");
    track->add_option("--seed", tr.seed, "Channel seed");
    track->add_option("--gain", tr.gain, "Controller gain in (0, 1]")->capture_default_str();
    track->add_option("--noise-sd", tr.noise_sd, "Hand noise SD (input units)");
    track->add_flag("--no-compensate", tr.no_compensate, "Ignore inputs still in flight");
    track->add_option("--out", tr.out, "Output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (*simulate)
            return cmd_simulate(sim);
        if (*anova)
            return cmd_anova(an);
        if (*fig)
            return cmd_figure(fig_results, figure, fig_out);
        if (*score)
            return cmd_score(frames_path, course_path);
        if (*plan)
            return cmd_plan(participant, index, plan_seed, plan_out);
        if (*serve)
            return cmd_serve(port, data_dir, host);
        if (*courses)
            return cmd_courses(courses_out);
        if (*track)
            return cmd_track(tr);
    } catch (const Failure &f) {
        return f.exit_code;
    }
    return kExitInput;
}
