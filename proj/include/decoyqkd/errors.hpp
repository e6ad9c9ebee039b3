#pragma once

#include <stdexcept>
#include <string>

namespace decoyqkd {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A decoy-state condition does not hold, so no bound can be certified.
class ConditionViolation : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Arithmetic produced something unusable (zero denominator, undefined fraction).
class NumericalFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace decoyqkd
