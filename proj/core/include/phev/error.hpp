#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace phev {

// Base for every error raised by the library. Each module derives its own
// type carrying a module-specific kind enum so callers can branch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

template <typename Kind>
class KindedError : public Error {
 public:
  KindedError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) {}
  [[nodiscard]] Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace phev
