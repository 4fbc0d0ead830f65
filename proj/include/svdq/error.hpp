#pragma once

#include <stdexcept>
#include <string>

namespace svdq {

// Error taxonomy shared by the library and the CLI exit codes:
//   DataError    - malformed bytes, shape mismatches, non-finite input   (exit 1)
//   ConfigError  - invalid schedules, flags, infeasible targets          (exit 2)
//   NumericError - convergence or fit failures                          (exit 3)

struct DataError : std::runtime_error {
    explicit DataError(const std::string & msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string & msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string & msg) : std::runtime_error(msg) {}
};

} // namespace svdq
