#pragma once

#include <stdexcept>
#include <string>

namespace needleforge {

/// Invalid configuration value or inconsistent parameter set.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data (CSV rows, model files).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Degenerate or inconsistent mesh geometry.
struct MeshError : std::runtime_error {
    explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (calling predict on an untrained model, empty benchmark, ...).
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// The coupled solve cannot continue (singular constraint system, inversion).
struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace needleforge
