#include "service.hpp"

#include "util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <limits>

namespace delaylab {

using nlohmann::json;

namespace {

const char *errc_name(Errc c) {
    switch (c) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::domain: return "domain";
    case Errc::parse: return "parse";
    case Errc::validation: return "validation";
    case Errc::not_found: return "not_found";
    case Errc::sequence: return "sequence";
    case Errc::io: return "io";
    }
    return "error";
}

void send_json(httplib::Response &res, int status, const json &body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request &req) {
    try {
        json doc = json::parse(req.body);
        if (!doc.is_object())
            fail(Errc::parse, "request body must be a JSON object");
        return doc;
    } catch (const json::parse_error &e) {
        fail(Errc::parse, "request body: " + describe_offset(req.body, e.byte) + ": " + e.what());
    }
}

int int_field(const json &doc, std::initializer_list<const char *> names) {
    for (const char *name : names) {
        const auto it = doc.find(name);
        if (it == doc.end())
            continue;
        if (!it->is_number_integer())
            fail(Errc::validation, std::string(name) + " must be an integer");
        const auto v = it->get<long long>();
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            fail(Errc::validation, std::string(name) + " is out of range");
        return static_cast<int>(v);
    }
    fail(Errc::validation, std::string(*names.begin()) + " is required");
}

int set_index_param(const std::string &text) { return static_cast<int>(parse_int(text, "set index")); }

} // namespace

int http_status(Errc code) {
    switch (code) {
    case Errc::invalid_argument:
    case Errc::parse: return 400;
    case Errc::not_found: return 404;
    case Errc::sequence: return 409;
    case Errc::validation:
    case Errc::domain: return 422;
    case Errc::io: return 500;
    }
    return 500;
}

Service::Service(const std::filesystem::path &data_dir)
    : store_(data_dir), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

Service::~Service() { stop(); }

void Service::install_routes() {
    auto &srv = *server_;
    // The library default (SO_REUSEPORT) would let a second server share a
    // busy port silently; plain SO_REUSEADDR makes that a bind failure.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});

    srv.set_exception_handler([](const httplib::Request &, httplib::Response &res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error &e) {
            send_json(res, http_status(e.code()), {{"error", errc_name(e.code())}, {"message", e.what()}});
        } catch (const std::exception &e) {
            send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
        }
    });

    srv.Options(R"(/api/.*)", [](const httplib::Request &, httplib::Response &res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    srv.Get("/api/health", [](const httplib::Request &, httplib::Response &res) {
        send_json(res, 200, {{"status", "ok"}, {"version", DELAYLAB_VERSION}, {"time", utc_timestamp()}});
    });

    srv.Post("/api/sessions", [this](const httplib::Request &req, httplib::Response &res) {
        const json body = parse_body(req);
        CreateRequest cr;
        if (!body.contains("participant_id") || !body["participant_id"].is_string())
            fail(Errc::validation, "participant_id must be a string");
        cr.participant_id = body["participant_id"].get<std::string>();
        cr.participant_index = int_field(body, {"participant_index"});
        if (!body.contains("seed") || !body["seed"].is_number_unsigned())
            fail(Errc::validation, "seed must be a non-negative integer");
        cr.seed = body["seed"].get<std::uint64_t>();
        if (body.contains("study")) {
            if (!body["study"].is_string())
                fail(Errc::validation, "study must be a string");
            cr.study = body["study"].get<std::string>();
        }
        const SessionInfo info = store_.create(cr);
        send_json(res, 201,
                  {{"session_id", info.session_id},
                   {"study", info.study},
                   {"created_at", info.created_at},
                   {"plan_summary", plan_summary(info.plan)},
                   {"plan", to_json(info.plan)}});
    });

    srv.Get(R"(/api/sessions/([A-Za-z0-9_.\-]+)/next)", [this](const httplib::Request &req, httplib::Response &res) {
        const std::string id = req.matches[1];
        const NextSet next = store_.next_set(id);
        if (next.complete) {
            send_json(res, 200, {{"complete", true}, {"session_id", id}});
            return;
        }
        const SetSpec &s = *next.set;
        send_json(res, 200,
                  {{"complete", false},
                   {"session_id", id},
                   {"set", to_json(s)},
                   {"course", to_json(store_.course(s.course_id))},
                   {"resetting", resetting_config()},
                   {"total_sets", kPlanSets}});
    });

    srv.Post(R"(/api/sessions/([A-Za-z0-9_.\-]+)/sets/(\d+)/frames)",
             [this](const httplib::Request &req, httplib::Response &res) {
                 const std::string id = req.matches[1];
                 const int n = set_index_param(req.matches[2]);
                 const double score = store_.record_frames(id, n, req.body);
                 const SessionInfo info = store_.get(id);
                 send_json(res, 200,
                           {{"score", score},
                            {"set_index", n},
                            {"mismatches", info.results[static_cast<std::size_t>(n)].mismatches}});
             });

    srv.Post(R"(/api/sessions/([A-Za-z0-9_.\-]+)/sets/(\d+)/rating)",
             [this](const httplib::Request &req, httplib::Response &res) {
                 const std::string id = req.matches[1];
                 const int n = set_index_param(req.matches[2]);
                 const json body = parse_body(req);
                 const int q1 = int_field(body, {"q1_control", "q1"});
                 const int q2 = int_field(body, {"q2_desired", "q2"});
                 const RatingRecord rec = store_.record_rating(id, n, q1, q2);
                 send_json(res, 200, {{"ok", true}, {"set_index", n}, {"timestamp", rec.timestamp}});
             });

    srv.Get(R"(/api/sessions/([A-Za-z0-9_.\-]+)/export\.csv)",
            [this](const httplib::Request &req, httplib::Response &res) {
                res.set_content(store_.export_session(req.matches[1]).to_csv(), "text/csv");
            });

    srv.Get(R"(/api/studies/([A-Za-z0-9_.\-]+)/export\.csv)",
            [this](const httplib::Request &req, httplib::Response &res) {
                res.set_content(store_.export_study(req.matches[1]).to_csv(), "text/csv");
            });
}

void Service::start(const std::string &host, int port) {
    if (thread_.joinable())
        fail(Errc::invalid_argument, "service already started");
    if (port < 0 || port > 65535)
        fail(Errc::invalid_argument, "port must be in [0, 65535]");
    if (port == 0) {
        port_ = server_->bind_to_any_port(host);
        if (port_ < 0)
            fail(Errc::io, "cannot bind " + host);
    } else {
        if (!server_->bind_to_port(host, port))
            fail(Errc::io, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
        port_ = port;
    }
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

void Service::wait() {
    while (thread_.joinable() && server_->is_running())
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

void Service::stop() {
    if (server_)
        server_->stop();
    if (thread_.joinable())
        thread_.join();
}

} // namespace delaylab
