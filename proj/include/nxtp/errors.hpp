#pragma once

#include <stdexcept>
#include <string>

namespace nxtp {

// Bad input files, malformed records, shape mismatches.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite losses, diverging optimization.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad flags / config keys.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace nxtp
