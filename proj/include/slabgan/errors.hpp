#pragma once

#include <stdexcept>
#include <string>

namespace slabgan {

// Error taxonomy. The CLI maps these onto exit codes:
// ConfigError -> 1, DataError (and subclasses) -> 2, DivergenceError -> 3.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested node or predecessor does not exist in the configured topology.
struct TopologyError : ConfigError {
    using ConfigError::ConfigError;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : DataError {
    using DataError::DataError;
};

struct IoError : DataError {
    using DataError::DataError;
};

struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& component, long last_finite_step, const std::string& detail)
        : std::runtime_error("training diverged: non-finite " + component + " after step " +
                             std::to_string(last_finite_step) + (detail.empty() ? "" : " (" + detail + ")")),
          component(component),
          last_finite_step(last_finite_step) {}

    std::string component;
    long last_finite_step;
};

}  // namespace slabgan
