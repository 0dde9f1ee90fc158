#pragma once

#include <stdexcept>
#include <string>

namespace transplat {

/// Base for every error thrown by the library. The CLI maps the concrete
/// subclass to its exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad flags, bad config values, out-of-range hyperparameters (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data: files, shapes, masks (exit code 2).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Parse failure while reading a file; carries the byte offset where it stopped.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : ValidationError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// NaN/Inf encountered during optimization (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace transplat
