#pragma once

#include <stdexcept>
#include <string>

namespace cogdiag {

// Input files that cannot be parsed at all (bad JSON, bad CSV, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally parseable input that violates dataset invariants.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (missing paths, empty method set, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss during training.
struct TrainDivergence : std::runtime_error {
    explicit TrainDivergence(const std::string& what) : std::runtime_error(what) {}
};

// Judge endpoint unreachable / transport-level failure.
struct JudgeTransportError : std::runtime_error {
    explicit JudgeTransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cogdiag
