#pragma once

#include <stdexcept>
#include <string>

namespace scan {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is missing, unknown or out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file or dataset could not be read or is malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A computation produced or received a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace scan
