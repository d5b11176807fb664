#pragma once

#include <stdexcept>
#include <string>

namespace m3net {

// Shape/dimension disagreement between tensors.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Index outside a table or axis.
struct BoundsError : std::runtime_error {
    explicit BoundsError(const std::string& what) : std::runtime_error(what) {}
};

// Missing/invalid input file or value.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// An artifact (checkpoint, container) exists but its contents are damaged
// or of an incompatible version.
struct CorruptError : std::runtime_error {
    explicit CorruptError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent or unknown configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required (losses, gradients).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace m3net
