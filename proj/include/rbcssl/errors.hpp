#pragma once

#include <stdexcept>
#include <string>

namespace rbc {

// Validation-class errors (CLI exit code 1) derive from ValidationError,
// runtime-class errors (exit code 2) from RuntimeFailure.

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image extents that do not fit together.
class DimensionError : public ValidationError {
 public:
  explicit DimensionError(const std::string& what) : ValidationError("dimension error: " + what) {}
};

/// A hyperparameter or argument outside its admissible range.
class ParameterError : public ValidationError {
 public:
  explicit ParameterError(const std::string& what) : ValidationError("parameter error: " + what) {}
};

/// A protocol precondition does not hold (single source for LOSO, one view, ...).
class ProtocolError : public ValidationError {
 public:
  explicit ProtocolError(const std::string& what) : ValidationError("protocol error: " + what) {}
};

class ConfigError : public ValidationError {
 public:
  explicit ConfigError(const std::string& what) : ValidationError("config error: " + what) {}
};

class InputError : public ValidationError {
 public:
  explicit InputError(const std::string& what) : ValidationError("input error: " + what) {}
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public RuntimeFailure {
 public:
  explicit NumericError(const std::string& what) : RuntimeFailure("numeric error: " + what) {}
};

class IoError : public RuntimeFailure {
 public:
  explicit IoError(const std::string& what) : RuntimeFailure("io error: " + what) {}
};

}  // namespace rbc
