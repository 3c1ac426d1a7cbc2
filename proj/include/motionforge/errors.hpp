#pragma once

#include <stdexcept>
#include <string>

namespace motionforge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter violated an operation's precondition (γ ≤ 0, t out of range, ...).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyDataset : public IoError {
 public:
  using IoError::IoError;
};

/// Raised when a training or gradient evaluation produces a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace motionforge
