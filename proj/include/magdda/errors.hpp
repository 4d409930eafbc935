#pragma once

#include <stdexcept>
#include <string>

namespace magdda {

/// Base class for all engine errors.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user input: scene files, CLI arguments, parameter ranges.
struct ConfigError : Error {
    using Error::Error;
};

/// Voxelization produced no voxels or exceeded the voxel budget.
struct GridError : Error {
    using Error::Error;
};

/// Iterative linear solve failed to reach the requested tolerance.
struct ConvergenceError : Error {
    using Error::Error;
};

/// Root bracketing / special-point searches failed.
struct SingularPointError : Error {
    using Error::Error;
};

/// Angular quadrature failed its self-consistency (refinement) check.
struct QuadratureError : Error {
    using Error::Error;
};

/// Series summation exceeded its order budget before the tail criterion held.
struct SlowConvergenceError : Error {
    using Error::Error;
};

/// Surrogate training diverged (non-finite or exploding loss).
struct TrainingError : Error {
    using Error::Error;
};

} // namespace magdda
