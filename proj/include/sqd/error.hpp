#pragma once

#include <stdexcept>
#include <string>

namespace sqd {

/// Base class for every error raised by the library. `category()` is a short
/// stable token used by the CLI when it reports failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual const char* category() const noexcept { return "error"; }
};

/// Invalid parameters or configuration (bad shape parameter, lambda out of range, parse errors).
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* category() const noexcept override { return "config"; }
};

/// Adaptive quadrature could not reach the requested tolerance.
class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double achieved_error)
      : Error(what), achieved_error_(achieved_error) {}
  [[nodiscard]] const char* category() const noexcept override { return "quadrature"; }
  [[nodiscard]] double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// Fixed-point solver failure (bracket sign violation, degenerate rates).
class SolverError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* category() const noexcept override { return "solver"; }
};

/// A performance measure was requested outside the regime where it is defined.
class UnsupportedMeasure : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* category() const noexcept override { return "unsupported"; }
};

/// Simulation result and invariant state do not describe the same system.
class ComparisonError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] const char* category() const noexcept override { return "comparison"; }
};

}  // namespace sqd
