#pragma once

#include <stdexcept>
#include <string>

namespace exnet {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A backward pass or optimizer step issued without the state it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid sample data: labels out of range, mismatched lengths, empty sets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed files: CSV rows, tensor streams, checkpoints.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range hyperparameters or split fractions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] void throw_shape_error(const std::string& what);

}  // namespace exnet
