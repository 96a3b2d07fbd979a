#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace formlab {

/// Bad caller input: wrong arity, out-of-range values, mismatched dimensions.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A parameter-level validation failure that knows which entry was at fault.
class ParameterError : public ValidationError {
public:
    ParameterError(std::size_t index, const std::string& what)
        : ValidationError(what), index_(index) {}
    std::size_t index() const { return index_; }

private:
    std::size_t index_;
};

/// Malformed or truncated file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Persistent store failures (I/O, locking, unknown ids).
class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace formlab
