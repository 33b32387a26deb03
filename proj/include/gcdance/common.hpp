#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gcdance {

// Stable process exit codes, shared by the CLI and the error type below.
enum class errc : int {
    usage = 64,   // bad invocation / malformed arguments
    data = 2,     // unreadable, malformed or inconsistent inputs
    numeric = 3,  // NaN, non-convergence, degenerate systems
};

class error : public std::runtime_error {
public:
    error(errc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}

    errc code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(code_); }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
    throw error(code, message);
}

inline void require(bool ok, errc code, const std::string& message) {
    if (!ok) fail(code, message);
}

}  // namespace gcdance
