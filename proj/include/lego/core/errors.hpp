#pragma once

#include <stdexcept>
#include <string>

namespace lego {

// Violated precondition or shape mismatch at an API boundary.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ChecksumError : public IoError {
 public:
  using IoError::IoError;
};

// Raised by the trainer when a loss or gradient stops being finite.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace lego
