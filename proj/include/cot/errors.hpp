// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cot {

// Error taxonomy shared by all solvers. The CLI maps these onto exit codes:
// input/structure -> 3, numerical refusal -> 4, anything else -> 5.

/// Malformed or inconsistent input data (bad config, invariant violation).
struct input_error : std::runtime_error {
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structural requirement not met (e.g. reducible chain where irreducibility
/// is needed).
struct structure_error : std::runtime_error {
    explicit structure_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Argument outside the domain of a function.
struct domain_error : std::runtime_error {
    explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Requested configuration is out of scope for this solver (route elsewhere).
struct unsupported_error : std::runtime_error {
    explicit unsupported_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical refusal: CFL violation, unbounded dual, resolution too coarse.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Internal consistency check failed; indicates a bug, not bad input.
struct internal_error : std::logic_error {
    explicit internal_error(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace cot
