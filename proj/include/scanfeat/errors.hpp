#pragma once

#include <stdexcept>
#include <string>

namespace scanfeat {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or inconsistent configuration (maps to a dedicated CLI exit code).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// File read/write failure (maps to a dedicated CLI exit code).
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace scanfeat
