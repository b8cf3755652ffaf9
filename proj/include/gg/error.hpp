#pragma once

#include <stdexcept>
#include <string>

namespace gg {

/// Raised by pure computations when a precondition on their inputs fails.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a configuration violates a structural invariant (e.g. M does not divide N).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Search-level failure: initialization failed or every subtree failed.
class SearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gg
