#pragma once

#include <stdexcept>
#include <string>

namespace nfs {

// Shape or rank disagreement between tensors / layers.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (CLI, config file, module configs).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent dataset input.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite arithmetic is required (NaN loss, NaN grads).
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation invoked on an object whose state does not allow it yet
// (e.g. eval-mode batchnorm before any train-mode call).
class StateError : public std::runtime_error {
public:
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nfs
