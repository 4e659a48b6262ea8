#pragma once

#include <stdexcept>
#include <string>

namespace gfpo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A Response/Group/SelectionMask field broke its contract; message names the
// field and, where applicable, the offending index.
struct InvariantViolation : Error {
    explicit InvariantViolation(const std::string& field, const std::string& detail)
        : Error("invariant violation: " + field + ": " + detail), field(field) {}
    std::string field;
};

struct InvalidK : Error {
    using Error::Error;
};

struct GroupTooSmall : Error {
    using Error::Error;
};

struct NonFiniteValue : Error {
    using Error::Error;
};

struct EmptyDigest : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct InvalidDistribution : Error {
    using Error::Error;
};

struct EmptyPrompt : Error {
    using Error::Error;
};

struct DegenerateBaseline : Error {
    using Error::Error;
};

struct TooFewPrompts : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace gfpo
