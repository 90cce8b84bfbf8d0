#pragma once

#include <stdexcept>
#include <string>

namespace cnav {

/// Malformed or inconsistent input data (files, epochs, masks).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration detected before processing starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown: non-PSD covariance, non-finite state, etc.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cnav
