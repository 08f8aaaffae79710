#pragma once

#include <stdexcept>
#include <string>

namespace armaid {

/// Input violates a documented precondition (shape, range, degenerate data).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine failed to produce a trustworthy answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace armaid
