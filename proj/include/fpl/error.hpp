#pragma once

#include <stdexcept>
#include <string>

namespace fpl {

/// Precondition violated by the caller (bad dimensions, out-of-domain parameters).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure detected while a computation was running.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration rejected during parsing or validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fpl
