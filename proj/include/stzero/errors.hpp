#pragma once

#include <stdexcept>

namespace stzero {

// Error taxonomy for validation failures. Each class marks a distinct failure
// family so callers and tests can discriminate without parsing messages.

// Shape or width mismatch between operands.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation was used outside its contract (bad call sequence, out-of-range
// argument, wrong operand rank).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid payload content: NaN payloads, duplicate names, split violations.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input exceeds a declared capacity bound (e.g. description length).
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unknown slide or gene name.
class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Stored payload disagrees with its manifest.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stzero
