#pragma once

#include <stdexcept>
#include <string>

namespace w2s {

// Exit codes used by the CLI. Library code throws; main() maps.
enum class ExitCode : int {
    ok = 0,
    config_error = 1,
    run_divergence = 2,
    io_error = 3,
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace w2s
