#pragma once

#include <stdexcept>
#include <string>

namespace delaylab {

enum class Errc {
    invalid_argument,
    domain,
    parse,
    validation,
    not_found,
    sequence,
    io,
};

/// Single exception type for the core. The C API maps `code()` onto
/// `dl_status`; the CLI maps that onto exit codes.
class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string &what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string &what) { throw Error(code, what); }

} // namespace delaylab
