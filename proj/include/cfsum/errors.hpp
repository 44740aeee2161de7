#pragma once

#include <stdexcept>
#include <string>

namespace cfsum {

// Base for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes are incompatible; the message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value violates its invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// An object was used in a state that forbids the operation
// (e.g. a second backward pass on a consumed tape).
class StateError : public Error {
 public:
  using Error::Error;
};

// A softmax row with every position masked out.
class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

// Average precision is undefined (no positive labels in the sample).
class UndefinedApError : public Error {
 public:
  using Error::Error;
};

// Training aborted (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Tensor container file errors; each corruption class is distinct.
class TensorFileError : public Error {
 public:
  enum class Kind {
    kBadMagic,
    kBadVersion,
    kBadDtype,
    kTruncated,
    kMalformed,
    kIo,
  };

  TensorFileError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace cfsum
