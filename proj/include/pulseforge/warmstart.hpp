#pragma once

// Direct-transcription warm start for the shooting solver.
//
// Each control is a series in integrated Legendre polynomials, which vanish at
// both endpoints and converge spectrally on smooth extremals. An augmented
// Lagrangian drives a random series to a KKT point of the cost under the
// endpoint constraints. Along that primal trajectory the costate equations are
// linear in μ(0) and stationarity of H pins μ_u (or ∂H/∂u) to the known pulse,
// so the initial costate follows from one linear least-squares fit.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "algebra.hpp"
#include "dual.hpp"
#include "dynamics.hpp"
#include "model.hpp"
#include "lsq.hpp"
#include "ode.hpp"
#include "pmp.hpp"

namespace pulseforge {

struct DirectSeedOptions {
  int modes = 40;
  /// Coefficient spread in units of 2π/T; mode k is further divided by k+1.
  double sigma = 3.0;
  /// RK4 steps for the series optimization and for the costate fit.
  int steps = 128;
  int fit_steps = 4096;
  int max_iter = 200;
  double feasibility_tol = 1e-9;
};

namespace detail {

/// P_0(s)..P_{count-1}(s) by the three-term recurrence.
inline void legendre(double s, int count, double* out) {
  out[0] = 1.0;
  if (count > 1) out[1] = s;
  for (int n = 1; n + 1 < count; ++n) out[n + 1] = ((2 * n + 1) * s * out[n] - n * out[n - 1]) / (n + 1);
}

/// φ_k(s) = (P_{k+2}(s) − P_k(s)) / √(2(2k+3)): zero at s = ±1, with
/// derivatives √((2k+3)/2)·P_{k+1} orthonormal on [−1, 1].
inline void series_basis(double t, double horizon, int modes, double* value, double* rate) {
  std::vector<double> p(static_cast<std::size_t>(modes + 2));
  legendre(2.0 * t / horizon - 1.0, modes + 2, p.data());
  for (int k = 0; k < modes; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double c = std::sqrt(0.5 * (2 * k + 3));
    if (value != nullptr) value[k] = (p[ku + 2] - p[ku]) / (2.0 * c);
    if (rate != nullptr) rate[k] = 2.0 / horizon * c * p[ku + 1];
  }
}

}  // namespace detail

/// Series pulse with an optional constant drift control.
struct SeriesPulse {
  int controls = 0;
  int modes = 0;
  double horizon = 1.0;
  bool has_drift = false;
  std::vector<double> params;  // a_jk row-major by control, then u_0

  double value(int j, double t) const { return evaluate(j, t, false); }
  double rate(int j, double t) const { return evaluate(j, t, true); }

 private:
  double evaluate(int j, double t, bool derivative) const {
    std::vector<double> b(static_cast<std::size_t>(modes));
    detail::series_basis(t, horizon, modes, derivative ? nullptr : b.data(), derivative ? b.data() : nullptr);
    double s = 0.0;
    for (int k = 0; k < modes; ++k) s += params[static_cast<std::size_t>(j * modes + k)] * b[static_cast<std::size_t>(k)];
    return s;
  }
};

namespace detail {

/// Phase-aligned defect G†R − φI, real parts then imaginary parts.
template <class S>
void gate_defect(const GroupElement& target, const CMatrix<S>& r_final, S weight, S* out) {
  const int n = r_final.dim();
  CMatrix<S> m = target.matrix().adjoint().template cast<S>() * r_final;
  const S tr_re = m.re.trace();
  const S tr_im = m.im.trace();
  using std::sqrt;
  const S mag = sqrt(tr_re * tr_re + tr_im * tr_im);
  S ph_re(1.0);
  S ph_im(0.0);
  if (value_of(mag) >= 1e-12) {
    ph_re = tr_re / mag;
    ph_im = tr_im / mag;
  }
  m.re.diagonal().array() -= ph_re;
  m.im.diagonal().array() -= ph_im;
  int at = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[at++] = weight * m.re(i, j);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[at++] = weight * m.im(i, j);
}

/// Basis values for every mode at the RK4 half-step times i·h/2.
inline Eigen::MatrixXd basis_table(double horizon, int steps, int modes) {
  Eigen::MatrixXd table(2 * steps + 1, modes);
  std::vector<double> row(static_cast<std::size_t>(modes));
  for (int i = 0; i <= 2 * steps; ++i) {
    series_basis(horizon * i / (2.0 * steps), horizon, modes, row.data(), nullptr);
    for (int k = 0; k < modes; ++k) table(i, k) = row[static_cast<std::size_t>(k)];
  }
  return table;
}

/// R and the error curves under a prescribed series pulse. Only evaluated at
/// RK4 stage times, which the basis table covers.
template <class S>
class PrimalField {
 public:
  PrimalField(const HamiltonianSystem<S>& sys, std::span<const S> params, const Eigen::MatrixXd& table, int steps)
      : sys_(sys), params_(params), table_(table), half_step_(0.5 * sys.spec().horizon / steps) {}

  int size() const { return sys_.layout().omega_offset(0) + sys_.layout().p * sys_.layout().d; }

  Vector<S> operator()(double t, const Vector<S>& y) const {
    const Layout& l = sys_.layout();
    const auto row = static_cast<Eigen::Index>(std::lround(t / half_step_));
    const auto modes = table_.cols();
    std::vector<S> u(static_cast<std::size_t>(l.m), S(0.0));
    for (int j = 0; j < l.m; ++j) {
      for (Eigen::Index k = 0; k < modes; ++k) {
        u[static_cast<std::size_t>(j)] += params_[static_cast<std::size_t>(j * modes + k)] * table_(row, k);
      }
    }
    const CMatrix<S> r = read_matrix(y.data(), l.n);
    std::vector<CMatrix<S>> omegas;
    for (int k = 0; k < l.p; ++k) omegas.push_back(sys_.basis().combine(y.data() + l.omega_offset(k)));
    Vector<S> dy(y.size());
    write_matrix(CMatrix<S>(times_minus_i(sys_.term_value(0, u)) * r), dy.data());
    const auto rates = omega_rates(sys_.plan(), omegas, conjugated_noise(sys_.noise_hamiltonians(u), r));
    for (int k = 0; k < l.p; ++k) sys_.basis().coordinates(rates[static_cast<std::size_t>(k)], dy.data() + l.omega_offset(k));
    return dy;
  }

 private:
  const HamiltonianSystem<S>& sys_;
  std::span<const S> params_;
  const Eigen::MatrixXd& table_;
  double half_step_;
};

/// Endpoint constraints (gate defect, error-curve closures) of a series pulse.
template <class S>
Vector<S> series_constraints(const ProblemSpec& spec, std::span<const S> params, const Eigen::MatrixXd& table,
                             int steps) {
  const bool drift = spec.drift_mode == DriftMode::fictitious_drift_control;
  const HamiltonianSystem<S> sys(spec, drift ? params.back() : S(1.0));
  const Layout& l = sys.layout();
  const PrimalField<S> field(sys, params, table, steps);
  Vector<S> y0 = Vector<S>::Constant(field.size(), S(0.0));
  for (int i = 0; i < l.n; ++i) y0[i * l.n + i] = S(1.0);
  const Vector<S> yT = rk4_endpoint(field, y0, spec.horizon, steps);
  Vector<S> c(2 * l.n * l.n + l.p * l.d);
  // RK4 shrinks R by a near-scalar factor; dividing it out keeps the coarse
  // grid from flooring the defect.
  CMatrix<S> r = read_matrix(yT.data(), l.n);
  using std::sqrt;
  const S scale = sqrt((r.re.squaredNorm() + r.im.squaredNorm()) / S(double(l.n)));
  r.re /= scale;
  r.im /= scale;
  gate_defect(spec.target, r, S(1.0), c.data());
  for (int k = 0; k < l.p * l.d; ++k) c[2 * l.n * l.n + k] = yT[l.omega_offset(0) + k];
  return c;
}

inline Eigen::MatrixXd series_jacobian(const ProblemSpec& spec, std::span<const double> params,
                                       const Eigen::MatrixXd& table, int steps) {
  using D = Dual<double>;
  std::vector<D> pd(params.begin(), params.end());
  Eigen::MatrixXd jac;
  for (std::size_t c = 0; c < pd.size(); ++c) {
    pd[c].eps = 1.0;
    const Vector<D> r = series_constraints<D>(spec, std::span<const D>(pd), table, steps);
    if (jac.size() == 0) jac.resize(r.size(), static_cast<Eigen::Index>(pd.size()));
    for (int i = 0; i < r.size(); ++i) jac(i, static_cast<Eigen::Index>(c)) = r[i].eps;
    pd[c].eps = 0.0;
  }
  return jac;
}

/// Cost Hessian in series coordinates, from Legendre orthogonality.
inline Eigen::MatrixXd series_metric(const ProblemSpec& spec, int modes) {
  const Layout l = Layout::of(spec);
  const bool drift = spec.drift_mode == DriftMode::fictitious_drift_control;
  const int na = l.m * modes + (drift ? 1 : 0);
  const double horizon = spec.horizon;
  auto legendre_dot = [](int a, int b) { return a == b ? 2.0 / (2 * a + 1) : 0.0; };
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(modes, modes);
  for (int a = 0; a < modes; ++a) {
    for (int b = 0; b < modes; ++b) {
      const double l2 = (legendre_dot(a + 2, b + 2) - legendre_dot(a + 2, b) - legendre_dot(a, b + 2) +
                         legendre_dot(a, b)) /
                        (2.0 * std::sqrt((2 * a + 3) * (2 * b + 3.0)));
      block(a, b) = spec.weights.R_u * 0.5 * horizon * l2;
    }
    if (spec.smoothing == 1) block(a, a) += spec.weights.R_v * 2.0 / horizon;
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(na, na);
  for (int j = 0; j < l.m; ++j) w.block(j * modes, j * modes, modes, modes) = block;
  if (drift) w(na - 1, na - 1) = 1e-6 * w.diagonal().head(na - 1).maxCoeff();
  return w;
}

}  // namespace detail

/// Drives a series pulse to a KKT point of min ½aᵀWa subject to the endpoint
/// constraints with an augmented Lagrangian whose inner problems are least
/// squares: ‖[√W a; √ρ (c(a) + λ/ρ)]‖². Returns nothing when feasibility is
/// not reached.
inline std::optional<SeriesPulse> optimize_series(const ProblemSpec& spec, std::vector<double> params, int modes,
                                                  const DirectSeedOptions& opt) {
  const Eigen::MatrixXd w = detail::series_metric(spec, modes);
  // ½aᵀWa = ½‖Ua‖² with W = UᵀU.
  const Eigen::MatrixXd w_half = w.llt().matrixU();
  const bool drift = spec.drift_mode == DriftMode::fictitious_drift_control;
  // The drift control is pulled toward 1 rather than 0.
  Eigen::VectorXd anchor = Eigen::VectorXd::Zero(w.rows());
  if (drift) anchor[anchor.size() - 1] = 1.0;
  const auto na = static_cast<Eigen::Index>(params.size());
  const Eigen::MatrixXd table = detail::basis_table(spec.horizon, opt.steps, modes);

  auto constraints = [&](const std::vector<double>& p) -> std::optional<Eigen::VectorXd> {
    try {
      Eigen::VectorXd c = detail::series_constraints<double>(spec, std::span<const double>(p), table, opt.steps);
      if (!c.allFinite()) return std::nullopt;
      return c;
    } catch (const IntegrationError&) {
      return std::nullopt;
    }
  };
  auto constraint_jacobian = [&](const std::vector<double>& p) -> std::optional<Eigen::MatrixXd> {
    try {
      Eigen::MatrixXd j = detail::series_jacobian(spec, p, table, opt.steps);
      if (!j.allFinite()) return std::nullopt;
      return j;
    } catch (const IntegrationError&) {
      return std::nullopt;
    }
  };
  auto shifted = [&](const std::vector<double>& p) {
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(p.data(), na) - anchor);
  };
  const LeastSquaresOptions restore{opt.feasibility_tol, opt.max_iter};

  LeastSquaresResult feasible = levenberg_marquardt(constraints, constraint_jacobian, std::move(params), restore);
  if (!feasible.converged) return std::nullopt;
  params = feasible.x;

  const auto nc = constraints(params)->size();
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(nc);
  double rho = std::max(1.0, shifted(params).dot(w * shifted(params)));
  double previous = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < 40; ++outer) {
    const double root = std::sqrt(rho);
    auto f = [&](const std::vector<double>& p) -> std::optional<Eigen::VectorXd> {
      const auto c = constraints(p);
      if (!c) return std::nullopt;
      Eigen::VectorXd r(na + nc);
      r << w_half * shifted(p), root * (*c + lambda / rho);
      return r;
    };
    auto jac = [&](const std::vector<double>& p) -> std::optional<Eigen::MatrixXd> {
      const auto cj = constraint_jacobian(p);
      if (!cj) return std::nullopt;
      Eigen::MatrixXd j(na + nc, na);
      j << w_half, root * *cj;
      return j;
    };
    const LeastSquaresResult inner = levenberg_marquardt(f, jac, params, LeastSquaresOptions{0.0, 100, 1e-10});
    const double moved = (Eigen::Map<const Eigen::VectorXd>(inner.x.data(), na) -
                          Eigen::Map<const Eigen::VectorXd>(params.data(), na)).norm();
    params = inner.x;
    const auto c = constraints(params);
    if (!c) return std::nullopt;
    lambda += rho * *c;
    const double violation = c->norm();
    if (violation <= 1e-6 && moved <= 1e-5 * (1.0 + shifted(params).norm())) break;
    if (violation > 0.25 * previous) rho *= 10.0;
    previous = violation;
  }

  feasible = levenberg_marquardt(constraints, constraint_jacobian, std::move(params), restore);
  if (!feasible.converged) return std::nullopt;

  SeriesPulse pulse;
  pulse.controls = Layout::of(spec).m;
  pulse.modes = modes;
  pulse.horizon = spec.horizon;
  pulse.has_drift = drift;
  pulse.params = std::move(feasible.x);
  return pulse;
}

/// Initial costate whose stationarity condition best reproduces `pulse`
/// along its own primal trajectory.
inline std::vector<double> fit_costate(const ProblemSpec& spec, const SeriesPulse& pulse, int steps) {
  const double u0 = pulse.has_drift ? pulse.params.back() : 1.0;
  const HamiltonianSystem<double> sys(spec, u0);
  const Layout& l = sys.layout();
  const double horizon = spec.horizon;

  auto controls = [&](double t) {
    std::vector<double> u(static_cast<std::size_t>(l.m));
    for (int j = 0; j < l.m; ++j) u[static_cast<std::size_t>(j)] = pulse.value(j, t);
    return u;
  };
  auto field = [&](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(y.size());
    auto pt = sys.decode(y.data());
    const auto u = controls(t);
    pt.u_state = u;
    write_matrix(CMatrix<double>(times_minus_i(sys.term_value(0, u)) * pt.R), dy.data());
    const auto rates = omega_rates(sys.plan(), pt.omegas, conjugated_noise(sys.noise_hamiltonians(u), pt.R));
    for (int k = 0; k < l.p; ++k) sys.basis().coordinates(rates[static_cast<std::size_t>(k)], dy.data() + l.omega_offset(k));
    const auto cr = sys.costate_rates(pt, u);
    sys.basis().coordinates(cr.mu_R, dy.data() + l.mu_r_offset());
    for (int k = 0; k < l.p; ++k) sys.basis().coordinates(cr.mus[static_cast<std::size_t>(k)], dy.data() + l.mu_offset(k));
    for (int j = 0; j < l.m * l.s; ++j) dy[l.mu_u_offset() + j] = cr.mu_u[static_cast<std::size_t>(j)];
    return dy;
  };
  // Stationarity rows: μ_u = R_v u̇ with smoothing, ∂H/∂u = R_u u without.
  auto observe = [&](const Eigen::VectorXd& y, double* row) {
    const auto pt = sys.decode(y.data());
    const auto g = spec.smoothing == 1 ? pt.mu_u : sys.control_gradient(pt);
    for (int j = 0; j < l.m; ++j) row[j] = g[static_cast<std::size_t>(j)];
  };

  const int nc = l.costate_size();
  const int rows = (steps + 1) * l.m;
  Eigen::MatrixXd phi(rows, nc);
  Eigen::VectorXd target(rows);
  const double h = horizon / steps;
  for (int i = 0; i <= steps; ++i) {
    const double t = i * h;
    for (int j = 0; j < l.m; ++j) {
      target[i * l.m + j] = spec.smoothing == 1 ? spec.weights.R_v * pulse.rate(j, t)
                                                : spec.weights.R_u * pulse.value(j, t);
    }
  }
  std::vector<double> row(static_cast<std::size_t>(l.m));
  for (int c = 0; c < nc; ++c) {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(l.total_size());
    for (int i = 0; i < l.n; ++i) y[i * l.n + i] = 1.0;
    y[l.mu_r_offset() + c] = 1.0;
    const auto traj = rk4_integrate(field, y, horizon, steps);
    for (int i = 0; i <= steps; ++i) {
      observe(traj.values[static_cast<std::size_t>(i)], row.data());
      for (int j = 0; j < l.m; ++j) phi(i * l.m + j, c) = row[static_cast<std::size_t>(j)];
    }
  }
  const Eigen::VectorXd mu = phi.completeOrthogonalDecomposition().solve(target);
  std::vector<double> z(mu.data(), mu.data() + mu.size());
  if (pulse.has_drift) z.push_back(u0);
  return z;
}

/// Random series pulse → KKT point → fitted initial costate.
inline std::optional<std::vector<double>> direct_seed(const ProblemSpec& spec, std::uint64_t seed,
                                                      const DirectSeedOptions& opt) {
  const Layout l = Layout::of(spec);
  const bool drift = spec.drift_mode == DriftMode::fictitious_drift_control;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 2.0 * opt.sigma * std::numbers::pi / spec.horizon);
  std::vector<double> params(static_cast<std::size_t>(l.m * opt.modes + (drift ? 1 : 0)));
  for (int j = 0; j < l.m; ++j) {
    for (int k = 0; k < opt.modes; ++k) params[static_cast<std::size_t>(j * opt.modes + k)] = normal(rng) / (k + 1);
  }
  if (drift) params.back() = 1.0;
  const auto pulse = optimize_series(spec, std::move(params), opt.modes, opt);
  if (!pulse) return std::nullopt;
  return fit_costate(spec, *pulse, opt.fit_steps);
}

}  // namespace pulseforge
