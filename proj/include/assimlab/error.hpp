#pragma once

#include <stdexcept>
#include <string>

namespace assimlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition: shape mismatch, invalid argument, empty input.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a failed numerical procedure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Raised by the autodiff engine; carries the kind of the offending node.
class DifferentiationError : public NumericalError {
 public:
  DifferentiationError(std::string node_kind, const std::string& what)
      : NumericalError("differentiation error at '" + node_kind + "': " + what),
        node_kind_(std::move(node_kind)) {}
  const std::string& node_kind() const noexcept { return node_kind_; }

 private:
  std::string node_kind_;
};

/// RK4 produced non-finite values (dt too large or diverging state).
class IntegrationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Invalid configuration (bad key, bad value, inconsistent settings).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed persisted files. The code distinguishes the failure mode.
class FormatError : public Error {
 public:
  enum class Code { MagicMismatch, VersionMismatch, Truncated, ShapeMismatch, Corrupt };

  FormatError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

}  // namespace assimlab
