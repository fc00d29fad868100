#pragma once

#include <stdexcept>
#include <string>

namespace randls {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible matrix/vector shapes.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Matrix numerically rank-deficient where full rank is required.
class RankError : public Error {
public:
    explicit RankError(const std::string& what) : Error(what) {}
};

/// Invalid argument value (out of range, wrong sign, malformed spec).
class ArgumentError : public Error {
public:
    explicit ArgumentError(const std::string& what) : Error(what) {}
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, long line = 0) : Error(what), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Operation called on an object in the wrong state (e.g. untrained model).
class StateError : public Error {
public:
    explicit StateError(const std::string& what) : Error(what) {}
};

} // namespace randls
