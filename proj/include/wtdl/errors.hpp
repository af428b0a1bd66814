#pragma once

#include <stdexcept>
#include <string>

namespace wtdl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input layout (e.g. a CSV header that does not match).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A cell or token that could not be parsed as a number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input outside the domain of an operation (wrong dimensions, invalid
/// configuration, missing treatment arm, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: divergence, degenerate columns, singular variances.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wtdl
