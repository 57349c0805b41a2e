#pragma once

#include <stdexcept>
#include <string>

namespace tcl {

// Error families map one-to-one onto CLI exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Raised by the triplet loss when a batch holds no (anchor, positive, negative) triple.
class DegenerateBatch : public ContractError {
 public:
  using ContractError::ContractError;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace tcl
