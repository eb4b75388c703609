#pragma once

#include <stdexcept>
#include <string>

namespace collab {

// Malformed or out-of-range arguments (CLI exit code 2).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file or object that parses but breaks a domain invariant (exit code 3).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An API used out of its documented preconditions.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Numerical failure during training or evaluation (exit code 4).
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace collab
