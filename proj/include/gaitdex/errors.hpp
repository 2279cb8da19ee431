#pragma once

#include <stdexcept>
#include <string>

namespace gaitdex {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV header, JSON document).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Input parsed but violates a data invariant (non-finite angle, duplicates, missing curves).
class DataError : public Error {
public:
    using Error::Error;
};

/// A caller-supplied argument is out of its documented range.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// The numerical problem has no meaningful answer (zero covariance, zero spread).
class DegenerateError : public Error {
public:
    using Error::Error;
};

}  // namespace gaitdex
