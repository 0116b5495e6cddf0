#pragma once

#include <stdexcept>
#include <string>

namespace outfitgan {

/// Bad configuration value or inconsistent module setup. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape mismatch between producer and consumer.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value where finite math is required. CLI exit code 3.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem/serialization failure. CLI exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Silhouette occupancy outside the accepted [1%, 99%] band.
struct DegenerateMaskError : std::runtime_error {
    explicit DegenerateMaskError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Sampler preconditions not met (e.g. negative sampling from a batch of one).
struct SamplingError : std::runtime_error {
    explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace outfitgan
