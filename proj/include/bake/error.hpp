#pragma once

#include <stdexcept>
#include <string>

namespace bake {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value. The CLI maps this to exit 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Degenerate numerical input: zero feature rows, singular systems,
/// fully masked softmax rows, non-stochastic targets.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Dataset files or contents are malformed. The CLI maps this to exit 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedError : public DataError {
 public:
  using DataError::DataError;
};

class CountMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class LabelRangeError : public DataError {
 public:
  using DataError::DataError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace bake
