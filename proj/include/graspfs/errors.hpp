#pragma once

#include <stdexcept>
#include <string>

namespace graspfs {

// Invalid shapes, out-of-range arguments, inconsistent configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or a diverging optimisation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Truncated, corrupt or incompatible files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An object used against state it no longer matches (e.g. a stale trace).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace graspfs
