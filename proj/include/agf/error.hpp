#pragma once

#include <stdexcept>
#include <string>

namespace agf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch or zero-length axis.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid or inconsistent configuration (bad JSON, unknown keys, illegal
// option combinations).
struct ConfigError : Error {
    using Error::Error;
};

// Input data outside an operation's domain (non-positive values where a log
// is taken, non-finite evaluations, empty distributions).
struct DomainError : Error {
    using Error::Error;
};

// A fit could not be performed (too few points, degenerate data).
struct FitError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Divergence during optimization; carries the failing step index.
struct TrainingError : Error {
    TrainingError(const std::string& msg, long long step_index)
        : Error(msg + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
    long long step;
};

}  // namespace agf
