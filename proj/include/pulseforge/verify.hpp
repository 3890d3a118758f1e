#pragma once

// Verification that only reads the sampled envelope: noisy propagation,
// fidelity sweeps with log–log slope fits, an independent error-curve audit
// and the Magnus reconstruction check.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "algebra.hpp"
#include "dynamics.hpp"
#include "model.hpp"
#include "ode.hpp"
#include "pmp.hpp"
#include "shoot.hpp"

namespace pulseforge {

inline constexpr double kInfidelityFloor = 1e-10;

/// Piecewise cubic (4-point Lagrange) interpolation of a uniformly sampled
/// envelope. Exact at the samples.
class EnvelopeInterpolant {
 public:
  explicit EnvelopeInterpolant(const Envelope& env) : env_(env) {
    if (env.times.size() < 2 || env.u.size() != env.times.size()) {
      throw std::invalid_argument("envelope needs at least two samples with one control row each");
    }
    intervals_ = static_cast<int>(env.times.size()) - 1;
    h_ = env.times.back() / intervals_;
  }

  double horizon() const { return env_.times.back(); }

  void operator()(double t, std::vector<double>& out) const {
    const int m = env_.controls();
    out.assign(static_cast<std::size_t>(m), 0.0);
    const double s = std::clamp(t / h_, 0.0, static_cast<double>(intervals_));
    if (intervals_ < 3) {
      const int i = std::min(static_cast<int>(s), intervals_ - 1);
      const double w = s - i;
      for (int j = 0; j < m; ++j) out[j] = (1 - w) * sample(i, j) + w * sample(i + 1, j);
      return;
    }
    const int i = std::min(static_cast<int>(s), intervals_ - 1);
    const int j0 = std::clamp(i - 1, 0, intervals_ - 3);
    double w[4];
    for (int a = 0; a < 4; ++a) {
      double num = 1.0;
      double den = 1.0;
      for (int b = 0; b < 4; ++b) {
        if (a == b) continue;
        num *= s - (j0 + b);
        den *= static_cast<double>(a - b);
      }
      w[a] = num / den;
    }
    for (int j = 0; j < m; ++j) {
      double v = 0.0;
      for (int a = 0; a < 4; ++a) v += w[a] * sample(j0 + a, j);
      out[j] = v;
    }
  }

 private:
  double sample(int k, int j) const { return env_.u[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]; }

  const Envelope& env_;
  int intervals_ = 1;
  double h_ = 1.0;
};

namespace detail {

inline int verifier_steps(const Envelope& env, int steps) {
  return steps > 0 ? steps : std::max(1, static_cast<int>(env.times.size()) - 1);
}

}  // namespace detail

/// U(T) for U̇ = −i(H^(0)(u) + Σ ε_i H^(i)(u)) U under the interpolated envelope.
inline GroupElement propagate_noisy(const Envelope& env, std::span<const double> eps, const ProblemSpec& spec,
                                    int steps = 0) {
  if (eps.size() != static_cast<std::size_t>(spec.disturbances)) {
    throw DimensionError("disturbance tuple has length " + std::to_string(eps.size()) + ", expected " +
                         std::to_string(spec.disturbances));
  }
  const EnvelopeInterpolant interp(env);
  const int n = spec.dimension;
  std::vector<double> u;
  auto field = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    interp(t, u);
    CMatrix<double> h = hamiltonian_value(spec.terms[0], u, env.drift_scale);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (eps[i] != 0.0) h += hamiltonian_value(spec.terms[i + 1], u, env.drift_scale) * eps[i];
    }
    Eigen::VectorXd dy(y.size());
    write_matrix(CMatrix<double>(times_minus_i(h) * read_matrix(y.data(), n)), dy.data());
    return dy;
  };
  Eigen::VectorXd y0(2 * n * n);
  write_matrix(CMatrix<double>::identity(n), y0.data());
  const Eigen::VectorXd yT = rk4_endpoint(field, y0, env.horizon(), detail::verifier_steps(env, steps));
  return GroupElement(read_matrix(yT.data(), n));
}

inline GroupElement propagate_noisy(const PulseSolution& sol, std::span<const double> eps, const ProblemSpec& spec,
                                    int steps = 0) {
  return propagate_noisy(sol.envelope, eps, spec, steps);
}

/// (1/N)|tr(G†U)| clipped to [0, 1].
inline double fidelity(const GroupElement& g, const GroupElement& u) {
  detail::require_same_dim(g.dim(), u.dim());
  const double f = std::abs(trace(g.matrix().adjoint() * u.matrix())) / g.dim();
  return std::clamp(f, 0.0, 1.0);
}

/// Least-squares slope of log10(y) against log10(x) over points with
/// y ≥ floor. Empty when fewer than two points remain.
inline std::optional<double> loglog_slope(std::span<const double> x, std::span<const double> y,
                                          double floor = kInfidelityFloor) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t k = 0; k < x.size() && k < y.size(); ++k) {
    if (y[k] >= floor && x[k] > 0.0) {
      lx.push_back(std::log10(x[k]));
      ly.push_back(std::log10(y[k]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

struct SweepResult {
  std::vector<std::vector<double>> epsilons;
  std::vector<double> infidelities;
  std::optional<double> fitted_slope;
  double fit_min = 0.0;
  double fit_max = 0.0;
  int fitted_points = 0;
};

/// Log-spaced grid of `count` points from a to b inclusive.
inline std::vector<double> log_grid(double a, double b, int count) {
  if (!(a > 0.0) || !(b > a) || count < 2) throw std::invalid_argument("degenerate grid");
  std::vector<double> g(static_cast<std::size_t>(count));
  const double la = std::log10(a);
  const double lb = std::log10(b);
  for (int k = 0; k < count; ++k) g[static_cast<std::size_t>(k)] = std::pow(10.0, la + (lb - la) * k / (count - 1));
  g.front() = a;
  g.back() = b;
  return g;
}

/// Infidelity along ε·direction for each ε in the grid.
inline SweepResult sweep(const Envelope& env, const ProblemSpec& spec, std::span<const double> direction,
                         std::span<const double> grid, double floor = kInfidelityFloor, int steps = 0) {
  if (direction.size() != static_cast<std::size_t>(spec.disturbances)) {
    throw DimensionError("sweep direction must have one entry per disturbance");
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0) || (k > 0 && !(grid[k] > grid[k - 1]))) {
      throw std::invalid_argument("sweep grid must be positive and increasing");
    }
  }
  SweepResult out;
  const GroupElement target = spec.target;
  for (double e : grid) {
    std::vector<double> eps(direction.begin(), direction.end());
    for (auto& x : eps) x *= e;
    const GroupElement u = propagate_noisy(env, eps, spec, steps);
    out.epsilons.push_back(eps);
    out.infidelities.push_back(1.0 - fidelity(target, u));
  }
  out.fitted_slope = loglog_slope(grid, out.infidelities, floor);
  bool first = true;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (out.infidelities[k] < floor) continue;
    if (first) out.fit_min = grid[k];
    out.fit_max = grid[k];
    first = false;
    ++out.fitted_points;
  }
  return out;
}

/// Sweep along disturbance axis `axis` (0-based).
inline SweepResult sweep_axis(const Envelope& env, const ProblemSpec& spec, int axis, std::span<const double> grid,
                              double floor = kInfidelityFloor, int steps = 0) {
  if (axis < 0 || axis >= spec.disturbances) throw std::out_of_range("sweep axis out of range");
  std::vector<double> dir(static_cast<std::size_t>(spec.disturbances), 0.0);
  dir[static_cast<std::size_t>(axis)] = 1.0;
  return sweep(env, spec, dir, grid, floor, steps);
}

struct ErrorCurveAudit {
  std::vector<MultiIndex> indices;
  std::vector<double> closure_norms;
  std::vector<double> times;
  /// curves[sample][index] in basis coordinates.
  std::vector<std::vector<CoordinateVector>> curves;
  GroupElement final_R;
  std::vector<AlgebraElement> final_omegas;
};

/// Re-integrates R and the error curves under the interpolated envelope.
inline ErrorCurveAudit error_curve_audit(const Envelope& env, const ProblemSpec& spec, int steps = 0) {
  const Layout l = Layout::of(spec);
  const ErrorCurvePlan plan(spec.disturbances, spec.order);
  const Basis<double> basis(spec.dimension);
  const EnvelopeInterpolant interp(env);
  std::vector<double> u;
  auto field = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    interp(t, u);
    const CMatrix<double> r = read_matrix(y.data(), l.n);
    std::vector<CMatrix<double>> noise_h;
    for (int i = 1; i <= spec.disturbances; ++i) {
      noise_h.push_back(hamiltonian_value(spec.terms[static_cast<std::size_t>(i)], u, env.drift_scale));
    }
    std::vector<CMatrix<double>> omegas;
    for (int k = 0; k < l.p; ++k) omegas.push_back(basis.combine(y.data() + l.omega_offset(k)));
    Eigen::VectorXd dy(y.size());
    write_matrix(CMatrix<double>(times_minus_i(hamiltonian_value(spec.terms[0], u, env.drift_scale)) * r),
                 dy.data());
    const auto rates = omega_rates(plan, omegas, conjugated_noise(noise_h, r));
    for (int k = 0; k < l.p; ++k) basis.coordinates(rates[static_cast<std::size_t>(k)], dy.data() + l.omega_offset(k));
    return dy;
  };
  Eigen::VectorXd y0 = Eigen::VectorXd::Zero(l.r_size() + l.p * l.d);
  write_matrix(CMatrix<double>::identity(l.n), y0.data());
  const auto traj = rk4_integrate(field, y0, env.horizon(), detail::verifier_steps(env, steps));

  ErrorCurveAudit out;
  out.indices = plan.indices;
  out.times = traj.times;
  for (const auto& y : traj.values) {
    std::vector<CoordinateVector> row;
    for (int k = 0; k < l.p; ++k) {
      row.emplace_back(y.data() + l.omega_offset(k), y.data() + l.omega_offset(k) + l.d);
    }
    out.curves.push_back(std::move(row));
  }
  const auto& yT = traj.final_value();
  out.final_R = GroupElement(read_matrix(yT.data(), l.n));
  for (int k = 0; k < l.p; ++k) {
    const std::span<const double> c(yT.data() + l.omega_offset(k), static_cast<std::size_t>(l.d));
    out.final_omegas.push_back(devectorize(c, l.n));
    out.closure_norms.push_back(norm(out.final_omegas.back()));
  }
  return out;
}

/// ‖R(T) expm(Σ ε^idx Ω_idx(T)) − U_noisy(T)‖_F, where ε^idx = Π ε_{i_k}.
inline double magnus_consistency(const Envelope& env, const ProblemSpec& spec, std::span<const double> eps,
                                 int steps = 0) {
  const ErrorCurveAudit audit = error_curve_audit(env, spec, steps);
  auto sum = AlgebraElement::zero(spec.dimension);
  for (std::size_t k = 0; k < audit.indices.size(); ++k) {
    double w = 1.0;
    for (int i : audit.indices[k].indices) w *= eps[static_cast<std::size_t>(i - 1)];
    sum = sum + audit.final_omegas[k] * w;
  }
  const GroupElement predicted = audit.final_R * expm(sum);
  const GroupElement actual = propagate_noisy(env, eps, spec, steps);
  return frobenius_norm(predicted.matrix() - actual.matrix());
}

/// max_t ‖R†R − I‖_F along a solver trajectory.
inline double unitarity_defect(const PulseSolution& sol, const ProblemSpec& spec) {
  const int n = spec.dimension;
  const auto eye = CMatrix<double>::identity(n);
  double worst = 0.0;
  for (const auto& y : sol.trajectory.values) {
    const CMatrix<double> r = read_matrix(y.data(), n);
    worst = std::max(worst, frobenius_norm(CMatrix<double>(r.adjoint() * r) - eye));
  }
  return worst;
}

/// max_t |H(t) − H(0)| of the control Hamiltonian along a solver trajectory.
inline double hamiltonian_drift(const PulseSolution& sol, const ProblemSpec& spec) {
  const HamiltonianSystem<double> sys(spec, sol.unknowns.drift_scale(spec));
  const auto& values = sol.trajectory.values;
  if (values.empty()) return 0.0;
  const double h0 = sys.hamiltonian_at(values.front().data());
  double worst = 0.0;
  for (const auto& y : values) worst = std::max(worst, std::abs(sys.hamiltonian_at(y.data()) - h0));
  return worst;
}

/// Solver-side ‖Ω_idx(T)‖ in enumeration order.
inline std::vector<double> closure_norms(const PulseSolution& sol, const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  const auto& y = sol.trajectory.final_value();
  std::vector<double> out;
  for (int k = 0; k < l.p; ++k) out.push_back(Eigen::Map<const Eigen::VectorXd>(y.data() + l.omega_offset(k), l.d).norm());
  return out;
}

/// Envelope sampled from a function of time on a uniform grid.
template <class F>
Envelope sample_envelope(F&& f, double horizon, int intervals, double drift_scale = 1.0) {
  Envelope env;
  env.drift_scale = drift_scale;
  for (int k = 0; k <= intervals; ++k) {
    const double t = k == intervals ? horizon : horizon * k / intervals;
    env.times.push_back(t);
    env.u.push_back(f(t));
  }
  return env;
}

/// Non-robust reference pulses for slope comparisons.
namespace baseline {

/// Constant X amplitude π/(4T): the plain √X rotation.
inline Envelope constant_sqrt_x(double horizon, int intervals = 1000) {
  const double a = std::numbers::pi / (4.0 * horizon);
  return sample_envelope([a](double) { return std::vector<double>{a}; }, horizon, intervals);
}

/// Hadamard (up to phase) as a smooth sin² Y pulse of area π/4 followed by a
/// sin² X pulse of area π/2, on (u_X, u_Y) controls.
inline Envelope sequential_hadamard(double horizon, int intervals = 1000) {
  const double half = 0.5 * horizon;
  // ∫ sin²(πt/half) dt over one half = half/2.
  const double ay = (std::numbers::pi / 4.0) / (half / 2.0);
  const double ax = (std::numbers::pi / 2.0) / (half / 2.0);
  return sample_envelope(
      [=](double t) {
        if (t < half) {
          const double s = std::sin(std::numbers::pi * t / half);
          return std::vector<double>{0.0, ay * s * s};
        }
        const double s = std::sin(std::numbers::pi * (t - half) / half);
        return std::vector<double>{ax * s * s, 0.0};
      },
      horizon, intervals);
}

}  // namespace baseline

}  // namespace pulseforge
