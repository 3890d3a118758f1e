#pragma once

// Classical fixed-step RK4 with dense storage on the integration grid, plus a
// step-doubling check that stands in for a tolerance-driven step choice.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dual.hpp"
#include "errors.hpp"

namespace pulseforge {

template <class Vec>
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> values;

  const Vec& final_value() const { return values.back(); }
  double horizon() const { return times.back(); }
};

namespace detail {

template <class Vec>
bool all_finite(const Vec& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!is_finite(y[i])) return false;
  }
  return true;
}

template <class Field, class Vec>
void rk4_step(const Field& f, double t, double h, Vec& y) {
  using Scalar = typename Vec::Scalar;
  const Scalar hs(h);
  const Scalar half(0.5 * h);
  const Vec k1 = f(t, y);
  const Vec k2 = f(t + 0.5 * h, Vec(y + k1 * half));
  const Vec k3 = f(t + 0.5 * h, Vec(y + k2 * half));
  const Vec k4 = f(t + h, Vec(y + k3 * hs));
  y += (k1 + k2 * Scalar(2.0) + k3 * Scalar(2.0) + k4) * Scalar(h / 6.0);
}

inline void check_grid(double horizon, int steps) {
  if (steps < 1) throw std::invalid_argument("rk4: steps must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("rk4: horizon must be positive");
}

}  // namespace detail

/// Integrates y' = f(t, y) on [0, T] with `steps` uniform RK4 steps and keeps
/// every grid value.
template <class Field, class Vec>
Trajectory<Vec> rk4_integrate(const Field& f, Vec y0, double horizon, int steps) {
  detail::check_grid(horizon, steps);
  const double h = horizon / steps;
  Trajectory<Vec> traj;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.values.reserve(static_cast<std::size_t>(steps) + 1);
  traj.times.push_back(0.0);
  traj.values.push_back(y0);
  for (int k = 0; k < steps; ++k) {
    detail::rk4_step(f, k * h, h, y0);
    if (!detail::all_finite(y0)) throw IntegrationError("non-finite value", k + 1);
    traj.times.push_back(k + 1 == steps ? horizon : (k + 1) * h);
    traj.values.push_back(y0);
  }
  return traj;
}

/// Same integration keeping only the final value.
template <class Field, class Vec>
Vec rk4_endpoint(const Field& f, Vec y0, double horizon, int steps) {
  detail::check_grid(horizon, steps);
  const double h = horizon / steps;
  for (int k = 0; k < steps; ++k) {
    detail::rk4_step(f, k * h, h, y0);
    if (!detail::all_finite(y0)) throw IntegrationError("non-finite value", k + 1);
  }
  return y0;
}

struct RefineResult {
  int steps = 0;
  double defect = 0.0;
};

inline constexpr int kRefineStartSteps = 256;
inline constexpr int kRefineMaxSteps = 1 << 16;
inline constexpr double kRefineTol = 1e-9;

/// Doubles the step count from `start` until ‖y_T(s) − y_T(2s)‖_∞ ≤ tol and
/// returns the smaller count of the accepted pair.
template <class Field, class Vec>
RefineResult refine_check(const Field& f, const Vec& y0, double horizon, int start = kRefineStartSteps,
                          double tol = kRefineTol, int max_steps = kRefineMaxSteps) {
  int steps = start;
  Vec coarse = rk4_endpoint(f, y0, horizon, steps);
  while (steps <= max_steps) {
    const Vec fine = rk4_endpoint(f, y0, horizon, 2 * steps);
    const double defect = (coarse - fine).cwiseAbs().maxCoeff();
    if (defect <= tol) return {steps, defect};
    steps *= 2;
    coarse = fine;
  }
  throw std::runtime_error("refine_check: stiff or discontinuous field (no convergence by " +
                           std::to_string(max_steps) + " steps)");
}

}  // namespace pulseforge
