#pragma once

#include <stdexcept>
#include <string>

namespace spillcast {

// Malformed configuration, CLI flags, or scenario files. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Unreadable or inconsistent input data. CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or a computation that cannot proceed numerically.
// CLI exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatch; message names the operation and both shapes.
struct ShapeError : NumericError {
  using NumericError::NumericError;
};

}  // namespace spillcast
