#pragma once

#include <stdexcept>
#include <string>

namespace spate {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that is well-formed on disk but violates a contract (bad shape,
/// non-finite values, degenerate sums, out-of-range indices).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A ratio denominator fell inside the configured guard band.
class DegenerateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NumericalError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// File system failures and malformed containers.
class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Payload shorter (or longer) than its header declares.
class LengthError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace spate
