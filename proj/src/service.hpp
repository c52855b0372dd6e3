#pragma once

// HTTP front end of the session store (JSON bodies, JSONL frame logs).

#include "errors.hpp"
#include "session_store.hpp"

#include <memory>
#include <string>
#include <thread>

namespace httplib {
class Server;
}

namespace delaylab {

class Service {
  public:
    /// Opens the store; throws Error(io) for an unusable data directory.
    explicit Service(const std::filesystem::path &data_dir);
    ~Service();

    Service(const Service &) = delete;
    Service &operator=(const Service &) = delete;

    /// Binds and starts serving on a background thread. Port 0 picks a free
    /// port. Throws Error(io) when the address cannot be bound.
    void start(const std::string &host, int port);
    int port() const { return port_; }
    /// Blocks until `stop` is called from elsewhere.
    void wait();
    void stop();

    SessionStore &store() { return store_; }

  private:
    void install_routes();

    SessionStore store_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

/// HTTP status for a core error code.
int http_status(Errc code);

} // namespace delaylab
