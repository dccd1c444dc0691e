#pragma once

#include <stdexcept>
#include <string>

namespace contractgen {

/// Invalid or malformed configuration (file syntax, unknown keys, bad
/// ranges). CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or malformed data at runtime (CSV files, checkpoints, output
/// collisions). CLI maps this to exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace contractgen
