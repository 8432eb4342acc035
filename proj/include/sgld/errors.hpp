#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgld {

// Invalid user-supplied configuration (bad parameters, unsupported kinds, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical contract violation (asymmetric matrix where a symmetric one is
// required, negative spectrum beyond tolerance, degenerate statistic, ...).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A validator could not produce a meaningful answer (e.g. every sampled pair
// was degenerate).
struct DiagnosticError : std::runtime_error {
    explicit DiagnosticError(const std::string& what) : std::runtime_error(what) {}
};

// File I/O failure, carrying the offending path in the message.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Chain left the trust region (|w| > divergence_radius) or produced a
// non-finite gradient.  Carries the step index and the offending state so the
// harness can report and exclude the replication.
struct ChainDivergenceError : std::runtime_error {
    ChainDivergenceError(std::size_t step_index, std::vector<double> state_at_failure,
                         const std::string& what)
        : std::runtime_error(what + " at step " + std::to_string(step_index)),
          step(step_index),
          state(std::move(state_at_failure)) {}

    std::size_t step;
    std::vector<double> state;
};

}  // namespace sgld
