#pragma once

#include <stdexcept>
#include <string>

namespace cbnn {

// Values double as CLI exit codes.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A value lies outside its representable range (e.g. pixel > magnitude bound).
class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Incompatible tensor, layer or dataset dimensions.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Malformed or truncated input files.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::data, what) {}
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ErrorKind::numeric, what) {}
};

}  // namespace cbnn
