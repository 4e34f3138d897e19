#pragma once

#include <stdexcept>

namespace rstab {

// Precondition or configuration rejected by an operation.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File missing, unreadable, unwritable, or malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation could not produce a result (diverged training, empty window).
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rstab
