#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sbc {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression or predicate text. `offset` is the byte offset of
/// the offending token (the text length for unexpected end of input).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Expression evaluation failed (division by zero, non-finite value).
class EvalError : public Error {
public:
    using Error::Error;
};

/// Inconsistent configuration: bad dimensions, invalid distributions,
/// nesting violations, grids that do not cover the safe set.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed: singular systems, stalled simplex.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A certificate was rejected, or an extraction was refused because its
/// precondition does not hold.
class VerificationError : public Error {
public:
    using Error::Error;
};

} // namespace sbc
