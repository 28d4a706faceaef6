#pragma once

#include <stdexcept>
#include <string>

namespace tba {

// Malformed or truncated file contents (PGM, CSV, JSON, model blobs).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid inputs that are inconsistent with the run setup:
// missing maps, cache misses, empty splits, path problems.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite arithmetic is required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tba
