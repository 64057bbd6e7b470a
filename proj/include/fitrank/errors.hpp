#pragma once

#include <stdexcept>
#include <string>

namespace fitrank {

/// Malformed or contradictory input data. CLI exit code 1.
class DataError : public std::runtime_error {
  public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver failed to converge or a fixed-point verification
/// failed. CLI exit code 2.
class ConvergenceError : public std::runtime_error {
  public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid run configuration. CLI exit code 3.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace fitrank
