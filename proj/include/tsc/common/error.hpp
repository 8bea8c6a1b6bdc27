#pragma once

#include <stdexcept>
#include <string>

namespace tsc {

// Raised when a configuration or input violates a documented invariant.
// The message names the violated invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tsc
