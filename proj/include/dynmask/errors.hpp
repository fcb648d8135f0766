#pragma once

#include <stdexcept>
#include <string>

namespace dynmask {

/// Malformed or inconsistent user configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A computation that cannot proceed: rank deficiency, instability,
/// ill-conditioned directions, failed preconditions. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dynmask
