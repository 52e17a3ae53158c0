#pragma once

#include <stdexcept>
#include <string>

namespace cflow {

/// Base of every error the library raises. `category()` is the short tag the
/// CLI prints as `error: <category>: <detail>`.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& detail)
      : std::runtime_error(detail), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

/// Caller broke an operation precondition (wrong arity, empty set, ...).
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& detail) : Error("contract", detail) {}
};

/// Infeasible shape or unknown/invalid configuration value.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& detail) : Error("config", detail) {}
};

/// A non-finite value appeared; `detail` names the layer or primitive.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& detail) : Error("numeric", detail) {}
};

/// Malformed input data (IDX, CSV, pixel ranges).
class InputError : public Error {
 public:
  explicit InputError(const std::string& detail) : Error("input", detail) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& detail) : Error("io", detail) {}
};

/// Checkpoint bytes do not match their checksum or are truncated.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& detail) : Error("integrity", detail) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& detail) : Error("version", detail) {}
};

}  // namespace cflow
