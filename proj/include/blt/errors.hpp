#pragma once

#include <stdexcept>
#include <string>

namespace blt {

/// Precondition violated by the caller (bad sizes, out-of-range parameters).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A query point fell outside the computational square.
class OutOfDomain : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Sparse factorization or solve failed; `what()` carries the solver diagnostic.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two representations of the same object disagree (e.g. weights vs. cut polygons).
class InternalConsistency : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace blt
