#pragma once

#include <stdexcept>
#include <string>

namespace calrank {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration: empty schema set, bad splits, mismatched test sets.
struct ConfigError : Error {
  using Error::Error;
};

// Training cannot proceed: single-label data, empty in-domain subset.
struct TrainingError : Error {
  using Error::Error;
};

// Object used before it is ready (e.g. scoring with an untrained model).
struct StateError : Error {
  using Error::Error;
};

// An operation received an empty list where at least one element is required.
struct EmptyInputError : Error {
  using Error::Error;
};

// Vector dimensions do not match.
struct ShapeError : Error {
  using Error::Error;
};

// A numeric argument lies outside the function's domain.
struct DomainError : Error {
  using Error::Error;
};

// A documented caller-side contract was violated.
struct ContractError : Error {
  using Error::Error;
};

}  // namespace calrank
