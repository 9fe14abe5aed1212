#pragma once

#include <stdexcept>
#include <string>

namespace rmlmc {

// Malformed or out-of-range configuration. Message names the offending field path.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// No plan satisfies the requested accuracy or budget.
struct InfeasiblePlan : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite sample, overflowing allocation or failed root search.
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rmlmc
