#pragma once

#include <stdexcept>
#include <string>

namespace updet {

// Shape incompatibility between tensor operands (message names the op and both shapes).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// An op produced NaN/Inf.
struct NumericFault : std::runtime_error {
    explicit NumericFault(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidArgument : std::runtime_error {
    explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidState : std::runtime_error {
    explicit InvalidState(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad scenario / model / run configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Environment protocol violation (e.g. submitting an unavailable action).
struct ProtocolError : std::runtime_error {
    explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint load/save failures: bad magic, checksum, version or layout mismatch.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace updet
