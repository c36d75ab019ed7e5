#pragma once

#include <stdexcept>
#include <string>

namespace sensemap {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Precondition violated by the caller (bad coordinates, wrong state, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed external data (image files, checkpoints, manifests).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure; the message names the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Tensor/layer shape mismatch; the message names the layer.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite value encountered during numeric computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Floorplan generation could not satisfy the configuration.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Data-collection episode could not start or broke an invariant.
class EpisodeError : public Error {
public:
    using Error::Error;
};

/// A* could not reach the goal.
class PathNotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace sensemap
