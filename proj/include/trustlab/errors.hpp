#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trustlab {

/// Base for every domain error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A configuration record violates its invariants.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input bytes could not be decoded. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Serialized model has an unknown format version.
class VersionError : public Error {
public:
    using Error::Error;
};

}  // namespace trustlab
