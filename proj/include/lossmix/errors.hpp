#pragma once

#include <stdexcept>
#include <string>

namespace lossmix {

/// Numeric failure (non-convergence, non-finite gradient). Maps to CLI exit
/// code 2; the message carries the offending inputs.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure. Maps to CLI exit code 3; the message carries the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lossmix
