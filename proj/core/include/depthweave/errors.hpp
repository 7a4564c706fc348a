#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace depthweave {

/// Caller passed data that violates an operation's precondition.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A point is on or behind the image plane of the camera it is projected into.
class BehindCameraError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or truncated file. `offset` is the byte position where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Bad configuration value or unknown key. `key` names the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error(key + ": " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Non-finite values or other unrecoverable numerical state inside the solver.
class SolverFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A metric was requested over an empty set of jointly valid pixels.
class UndefinedMetricError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Synthetic scene description that cannot be generated (e.g. geometry leaves the frustum).
class SceneSpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace depthweave
