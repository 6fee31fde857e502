#pragma once

#include <stdexcept>
#include <string>

namespace icl {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// An operation was called outside its contract (non-scalar loss, empty
// input, mismatched lengths, ...).
struct ContractError : Error {
  using Error::Error;
};

// Invalid user-supplied configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// A tensor would contain NaN or Inf.
struct NonFiniteError : Error {
  using Error::Error;
};

// File could not be read, written, or fails validation on load.
struct IoError : Error {
  using Error::Error;
};

}  // namespace icl
