#pragma once

#include <stdexcept>
#include <string>

namespace difficalib {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can report any failure with a single catch.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, unsupported version, malformed CSV structure.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File shorter or longer than its header promises.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Non-numeric field in a text input.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Input violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Gaussian fit could not be formed (e.g. a class with no samples).
class FitError : public Error {
 public:
  using Error::Error;
};

/// Covariance not positive-definite even after shrinkage.
class SingularityError : public FitError {
 public:
  using FitError::FitError;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace difficalib
