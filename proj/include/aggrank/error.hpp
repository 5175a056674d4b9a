#pragma once

#include <stdexcept>
#include <string>

namespace aggrank {

// Buckets map 1:1 onto command line exit codes.
enum class ErrorKind { kInternal = 1, kUsage = 2, kConfig = 3, kData = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

// Bad flags or flag combinations.
struct UsageError : Error {
  explicit UsageError(std::string m) : Error(ErrorKind::kUsage, std::move(m)) {}
};

// Invalid configuration values or unknown config keys.
struct ConfigError : Error {
  explicit ConfigError(std::string m) : Error(ErrorKind::kConfig, std::move(m)) {}
};

// Data that contradicts its schema (dimensions, grades, ids).
struct SchemaError : Error {
  explicit SchemaError(std::string m) : Error(ErrorKind::kConfig, std::move(m)) {}
};

// Lookup of a query/document/file that does not exist.
struct DataError : Error {
  explicit DataError(std::string m) : Error(ErrorKind::kData, std::move(m)) {}
};

struct IoError : Error {
  explicit IoError(std::string m) : Error(ErrorKind::kInternal, std::move(m)) {}
};

// Tensor dimension mismatch inside the numerical core.
struct ShapeError : Error {
  explicit ShapeError(std::string m) : Error(ErrorKind::kInternal, std::move(m)) {}
};

// Contract violation on a library call.
struct ArgumentError : Error {
  explicit ArgumentError(std::string m) : Error(ErrorKind::kInternal, std::move(m)) {}
};

}  // namespace aggrank
