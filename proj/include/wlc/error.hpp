#pragma once

#include <stdexcept>
#include <string>

namespace wlc {

/// Caller supplied parameters that violate an operation's preconditions.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A request that is valid but does not fit in the available memory budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: divergent integrals, singular systems, non-converged searches.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The propertime integral diverges because a support reaches down to lambda = 0.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace wlc
