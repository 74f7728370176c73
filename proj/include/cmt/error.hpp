#pragma once

#include <stdexcept>
#include <string>

namespace cmt {

/// Precondition of an operation was not met by the caller.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The target vanishes on every buffer sample, so no weight or normalizer can be formed.
class DegenerateBuffer : public std::runtime_error {
 public:
  DegenerateBuffer() : std::runtime_error("degenerate buffer: target vanishes on all samples") {}
  using std::runtime_error::runtime_error;
};

/// A structural invariant broke at runtime (e.g. a non-monotone annealing schedule).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Numerical procedure failed to produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cmt
