#pragma once

#include <stdexcept>
#include <string>

namespace attobeat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Scenario file could not be parsed or fails validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A computation failed: singular system, non-convergence, loop divergence.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace attobeat
