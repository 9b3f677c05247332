#pragma once

#include <stdexcept>
#include <string>

namespace ncsc {

// Bad input: shapes, configuration values, malformed files. Maps to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Something went wrong while running a valid request (divergence, I/O). Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ncsc
