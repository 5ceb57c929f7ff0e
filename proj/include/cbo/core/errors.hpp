#pragma once

#include <stdexcept>
#include <string>

namespace cbo {

/// Malformed arguments: dimension mismatches, empty data, out-of-domain points.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Linear algebra breakdown (covariance not positive definite after max jitter).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation invoked on an object that is not ready for it (e.g. unfitted model).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid run or comparison configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system or serialization failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cbo
