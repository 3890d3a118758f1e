#pragma once

#include <stdexcept>
#include <string>

namespace pulseforge {

/// Operand shapes or lengths do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A problem definition was rejected by validation (bad input, not rounding).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The problem is well formed but outside what the costate equations cover.
class UnsupportedError : public ValidationError {
 public:
  explicit UnsupportedError(const std::string& what) : ValidationError("unsupported: " + what) {}
};

/// The integrator produced a non-finite value.
class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, int step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// No multistart run reached the residual tolerance.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

}  // namespace pulseforge
