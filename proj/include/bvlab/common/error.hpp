#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bvlab {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree; the message names the offending graph node or op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// API called out of order (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}

  // Epoch, coordinate, or record index at which the problem was detected.
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace bvlab
