#pragma once

// Single shooting on the initial costate.
//
// The unknowns are the costate coordinates at t = 0 (and the constant drift
// control in fictitious-drift mode). Integrating the Hamiltonian vector field
// forward maps them to an endpoint residual, which a Levenberg–Marquardt loop
// drives to zero. Random restarts pick the feasible candidate of least cost.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "algebra.hpp"
#include "dual.hpp"
#include "dynamics.hpp"
#include "lsq.hpp"
#include "model.hpp"
#include "ode.hpp"
#include "pmp.hpp"
#include "warmstart.hpp"

namespace pulseforge {

/// Per-block residual weights (all 1 by default).
struct ResidualWeights {
  double gate = 1.0;
  double curves = 1.0;
  double endpoint = 1.0;
  double hamiltonian = 1.0;
};

enum class JacobianMethod { dual, central_difference };

/// Where multistart draws its initial costates: isotropic Gaussian samples,
/// or costates fitted to random direct-transcription pulses.
enum class Seeding { costate, direct };

struct SolverOptions {
  std::uint64_t seed = 0;
  int starts = 16;
  double sigma = 1.0;
  double tol = 1e-8;
  int max_iter = 200;
  /// RK4 steps used while screening starts; the returned solution is
  /// re-polished on doubled grids until the residual holds at s and 2s.
  int steps = 512;
  /// A start survives screening when its coarse-grid residual is this small.
  double screen_tol = 1e-6;
  ResidualWeights weights;
  JacobianMethod jacobian = JacobianMethod::dual;
  Seeding seeding = Seeding::costate;
  DirectSeedOptions direct;
};

/// Number of shooting unknowns: (N²−1)(p+1) + m·s (+1 with fictitious drift).
inline int unknown_count(const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  return l.costate_size() + (spec.drift_mode == DriftMode::fictitious_drift_control ? 1 : 0);
}

inline int residual_count(const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  return 2 * l.n * l.n + l.p * l.d + l.m * l.s + (spec.hamiltonian_residual ? 1 : 0);
}

/// Initial costate coordinates (plus the drift control when present).
struct ShootingUnknowns {
  std::vector<double> coords;

  /// Decodes into the costate at t = 0.
  Costate costate(const ProblemSpec& spec) const {
    const Layout l = Layout::of(spec);
    if (coords.size() != static_cast<std::size_t>(unknown_count(spec))) {
      throw DimensionError("shooting unknowns have length " + std::to_string(coords.size()) + ", expected " +
                           std::to_string(unknown_count(spec)));
    }
    const std::span<const double> z(coords);
    Costate mu;
    mu.mu_R = devectorize(z.subspan(0, static_cast<std::size_t>(l.d)), l.n);
    for (int k = 0; k < l.p; ++k) {
      mu.mus.push_back(devectorize(z.subspan(static_cast<std::size_t>((k + 1) * l.d), static_cast<std::size_t>(l.d)), l.n));
    }
    mu.mu_u.assign(coords.begin() + (l.p + 1) * l.d, coords.begin() + l.costate_size());
    return mu;
  }

  double drift_scale(const ProblemSpec& spec) const {
    return spec.drift_mode == DriftMode::fictitious_drift_control ? coords.back() : 1.0;
  }
};

namespace detail {

template <class S>
S unknown_drift_scale(const ProblemSpec& spec, std::span<const S> z) {
  return spec.drift_mode == DriftMode::fictitious_drift_control ? z.back() : S(1.0);
}

/// State ⊕ costate at t = 0: R = I, Ω = 0, u = 0, costate from z.
template <class S>
Vector<S> initial_point(const Layout& l, std::span<const S> z) {
  Vector<S> y = Vector<S>::Constant(l.total_size(), S(0.0));
  for (int i = 0; i < l.n; ++i) y[i * l.n + i] = S(1.0);
  for (int k = 0; k < l.costate_size(); ++k) y[l.state_size() + k] = z[static_cast<std::size_t>(k)];
  return y;
}

/// Endpoint residual from a final state. Gate block: G†R(T) − φI with the
/// phase φ = tr/|tr| (real parts then imaginary parts, row-major).
template <class S>
Vector<S> endpoint_residual(const HamiltonianSystem<S>& sys, const Vector<S>& y_final, const Vector<S>& y_initial,
                            const ResidualWeights& w) {
  const ProblemSpec& spec = sys.spec();
  const Layout& l = sys.layout();
  Vector<S> res(residual_count(spec));
  const CMatrix<S> r_final = read_matrix(y_final.data(), l.n);
  const CMatrix<S> g_dag = spec.target.matrix().adjoint().template cast<S>();
  CMatrix<S> m = g_dag * r_final;
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
  const S wg(w.gate);
  for (int i = 0; i < l.n; ++i)
    for (int j = 0; j < l.n; ++j) res[at++] = wg * m.re(i, j);
  for (int i = 0; i < l.n; ++i)
    for (int j = 0; j < l.n; ++j) res[at++] = wg * m.im(i, j);
  const S wc(w.curves);
  for (int k = 0; k < l.p * l.d; ++k) res[at++] = wc * y_final[l.omega_offset(0) + k];
  const S we(w.endpoint);
  for (int k = 0; k < l.m * l.s; ++k) res[at++] = we * y_final[l.u_offset() + k];
  if (spec.hamiltonian_residual) res[at++] = S(w.hamiltonian) * sys.hamiltonian_at(y_initial.data());
  return res;
}

}  // namespace detail

/// Residual of the shooting map at z, computed on scalar S.
template <class S>
Vector<S> residual(std::span<const S> z, const ProblemSpec& spec, int steps, const ResidualWeights& w = {}) {
  if (z.size() != static_cast<std::size_t>(unknown_count(spec))) {
    throw DimensionError("shooting unknowns have length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(unknown_count(spec)));
  }
  const HamiltonianSystem<S> sys(spec, detail::unknown_drift_scale(spec, z));
  const Vector<S> y0 = detail::initial_point(sys.layout(), z);
  const Vector<S> yT = rk4_endpoint(sys, y0, spec.horizon, steps);
  return detail::endpoint_residual(sys, yT, y0, w);
}

inline Eigen::VectorXd residual(std::span<const double> z, const ProblemSpec& spec, int steps,
                                const ResidualWeights& w = {}) {
  return residual<double>(z, spec, steps, w);
}

/// Jacobian of the residual, column by column.
inline Eigen::MatrixXd jacobian(std::span<const double> z, const ProblemSpec& spec, int steps,
                                JacobianMethod method = JacobianMethod::dual, const ResidualWeights& w = {}) {
  const int nz = static_cast<int>(z.size());
  Eigen::MatrixXd jac(residual_count(spec), nz);
  if (method == JacobianMethod::dual) {
    using D = Dual<double>;
    std::vector<D> zd(z.begin(), z.end());
    for (int c = 0; c < nz; ++c) {
      zd[static_cast<std::size_t>(c)].eps = 1.0;
      const Vector<D> r = residual<D>(std::span<const D>(zd), spec, steps, w);
      for (int i = 0; i < r.size(); ++i) jac(i, c) = r[i].eps;
      zd[static_cast<std::size_t>(c)].eps = 0.0;
    }
  } else {
    std::vector<double> zp(z.begin(), z.end());
    for (int c = 0; c < nz; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(z[static_cast<std::size_t>(c)]));
      const double orig = zp[static_cast<std::size_t>(c)];
      zp[static_cast<std::size_t>(c)] = orig + h;
      const Eigen::VectorXd rp = residual(std::span<const double>(zp), spec, steps, w);
      zp[static_cast<std::size_t>(c)] = orig - h;
      const Eigen::VectorXd rm = residual(std::span<const double>(zp), spec, steps, w);
      zp[static_cast<std::size_t>(c)] = orig;
      jac.col(c) = (rp - rm) / (2.0 * h);
    }
  }
  if (!jac.allFinite()) throw std::runtime_error("jacobian: non-finite entries");
  return jac;
}

/// Control samples on the integration grid.
struct Envelope {
  std::vector<double> times;
  std::vector<std::vector<double>> u;  // [sample][control]
  std::vector<std::vector<double>> v;  // [sample][control], smoothing only
  double drift_scale = 1.0;

  int controls() const { return u.empty() ? 0 : static_cast<int>(u.front().size()); }
  double horizon() const { return times.back(); }
};

struct Candidate {
  std::uint64_t seed = 0;
  int iterations = 0;
  double residual_norm = std::numeric_limits<double>::infinity();
  double cost_J = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::vector<double> unknowns;
};

struct PulseSolution {
  ShootingUnknowns unknowns;
  double residual_norm = std::numeric_limits<double>::infinity();
  double cost_J = 0.0;
  Envelope envelope;
  /// Flattened state ⊕ costate on the integration grid.
  Trajectory<Eigen::VectorXd> trajectory;
  int steps_used = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  std::vector<Candidate> candidates;
};

/// Composite Simpson rule on a uniform grid (Simpson 3/8 closes an odd count).
inline double simpson(std::span<const double> f, double h) {
  const int intervals = static_cast<int>(f.size()) - 1;
  if (intervals <= 0) return 0.0;
  if (intervals == 1) return 0.5 * h * (f[0] + f[1]);
  double sum = 0.0;
  int end = intervals;
  if (intervals % 2 == 1) {
    end = intervals - 3;
    const auto e = static_cast<std::size_t>(end);
    sum += 3.0 * h / 8.0 * (f[e] + 3.0 * f[e + 1] + 3.0 * f[e + 2] + f[e + 3]);
  }
  for (int k = 0; k + 2 <= end; k += 2) {
    const auto i = static_cast<std::size_t>(k);
    sum += h / 3.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
  }
  return sum;
}

/// J = ∫ ½ (R_u Σu² + R_v Σv²) dt on the envelope grid.
inline double cost_evaluate(const Envelope& env, const ProblemSpec& spec) {
  std::vector<double> running(env.times.size(), 0.0);
  for (std::size_t k = 0; k < env.times.size(); ++k) {
    double l = 0.0;
    for (double uj : env.u[k]) l += spec.weights.R_u * uj * uj;
    if (!env.v.empty()) {
      for (double vj : env.v[k]) l += spec.weights.R_v * vj * vj;
    }
    running[k] = 0.5 * l;
  }
  if (env.times.size() < 2) return 0.0;
  return simpson(running, env.times[1] - env.times[0]);
}

inline double cost_evaluate(const PulseSolution& sol, const ProblemSpec& spec) {
  return cost_evaluate(sol.envelope, spec);
}

/// Integrates the Hamiltonian system from z and fills trajectory, envelope,
/// residual and cost.
inline PulseSolution simulate(const ProblemSpec& spec, std::span<const double> z, int steps,
                              const ResidualWeights& w = {}) {
  const HamiltonianSystem<double> sys(spec, detail::unknown_drift_scale(spec, z));
  const Layout& l = sys.layout();
  const Eigen::VectorXd y0 = detail::initial_point(l, z);
  PulseSolution sol;
  sol.unknowns.coords.assign(z.begin(), z.end());
  sol.trajectory = rk4_integrate(sys, y0, spec.horizon, steps);
  sol.steps_used = steps;
  sol.residual_norm = detail::endpoint_residual(sys, sol.trajectory.final_value(), y0, w).norm();
  sol.envelope.times = sol.trajectory.times;
  sol.envelope.drift_scale = sys.drift_scale();
  for (const auto& y : sol.trajectory.values) {
    const auto pt = sys.decode(y.data());
    const auto inputs = sys.optimal_inputs(pt);
    sol.envelope.u.push_back(sys.physical_controls(pt, inputs));
    if (spec.smoothing == 1) sol.envelope.v.push_back(inputs);
  }
  sol.cost_J = cost_evaluate(sol.envelope, spec);
  return sol;
}

/// LM on the shooting residual of `spec` at a fixed step count.
inline LeastSquaresResult levenberg_marquardt(const ProblemSpec& spec, std::vector<double> x, int steps,
                                              const SolverOptions& opt) {
  auto f = [&](const std::vector<double>& z) -> std::optional<Eigen::VectorXd> {
    try {
      Eigen::VectorXd r = residual(std::span<const double>(z), spec, steps, opt.weights);
      if (!r.allFinite()) return std::nullopt;
      return r;
    } catch (const IntegrationError&) {
      return std::nullopt;
    }
  };
  auto jac = [&](const std::vector<double>& z) -> std::optional<Eigen::MatrixXd> {
    try {
      return jacobian(std::span<const double>(z), spec, steps, opt.jacobian, opt.weights);
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  return levenberg_marquardt(f, jac, std::move(x), LeastSquaresOptions{opt.tol, opt.max_iter});
}

namespace detail {

inline std::vector<double> random_unknowns(const ProblemSpec& spec, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::vector<double> z(static_cast<std::size_t>(unknown_count(spec)));
  for (auto& zi : z) zi = normal(rng);
  if (spec.drift_mode == DriftMode::fictitious_drift_control) z.back() = 1.0 + z.back();
  return z;
}

/// Lower cost wins; ties broken by smaller residual, then smaller seed.
inline bool better(const Candidate& a, const Candidate& b) {
  if (a.cost_J != b.cost_J) return a.cost_J < b.cost_J;
  if (a.residual_norm != b.residual_norm) return a.residual_norm < b.residual_norm;
  return a.seed < b.seed;
}

}  // namespace detail

/// Initial unknowns for start `seed`, or nothing when seeding fails.
inline std::optional<std::vector<double>> initial_unknowns(const ProblemSpec& spec, std::uint64_t seed,
                                                           const SolverOptions& opt) {
  if (opt.seeding == Seeding::costate) return detail::random_unknowns(spec, seed, opt.sigma);
  try {
    return direct_seed(spec, seed, opt.direct);
  } catch (const IntegrationError&) {
    return std::nullopt;
  }
}

struct RefinedRoot {
  std::vector<double> unknowns;
  int steps = 0;
  bool converged = false;
};

/// Polishes z on doubled grids until ‖F_s(z)‖ and ‖F_2s(z)‖ both meet tol.
inline RefinedRoot refine_root(const ProblemSpec& spec, std::vector<double> z, const SolverOptions& opt) {
  RefinedRoot out;
  for (int s = opt.steps; s <= kRefineMaxSteps; s *= 2) {
    const LeastSquaresResult ls = levenberg_marquardt(spec, z, s, opt);
    z = ls.x;
    out.unknowns = z;
    out.steps = s;
    if (!(ls.residual_norm <= opt.tol)) {
      // Halving the step should not undo a coarse-grid root; give up if it did.
      if (!(ls.residual_norm <= opt.screen_tol)) return out;
      continue;
    }
    double doubled = std::numeric_limits<double>::infinity();
    try {
      doubled = residual(std::span<const double>(z), spec, 2 * s, opt.weights).norm();
    } catch (const IntegrationError&) {
      return out;
    }
    if (doubled <= opt.tol) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

/// Multistart search. Always returns the best attempt; `converged` tells
/// whether it meets the tolerance.
inline PulseSolution solve_best_effort(const ProblemSpec& spec, const SolverOptions& opt) {
  if (opt.starts < 1) throw std::invalid_argument("solve: need at least one start");
  if (opt.steps < 1) throw std::invalid_argument("solve: steps must be positive");
  const double screen = std::max(opt.tol, opt.screen_tol);
  std::vector<Candidate> candidates;
  for (int k = 0; k < opt.starts; ++k) {
    Candidate c;
    c.seed = opt.seed + static_cast<std::uint64_t>(k);
    const auto z0 = initial_unknowns(spec, c.seed, opt);
    if (z0) {
      const auto ls = levenberg_marquardt(spec, *z0, opt.steps, opt);
      c.iterations = ls.iterations;
      c.residual_norm = ls.residual_norm;
      c.converged = ls.residual_norm <= screen;
      c.unknowns = ls.x;
    }
    if (c.converged) {
      try {
        c.cost_J = simulate(spec, c.unknowns, opt.steps, opt.weights).cost_J;
      } catch (const IntegrationError&) {
        c.converged = false;
      }
    }
    candidates.push_back(std::move(c));
  }

  std::vector<const Candidate*> order;
  for (const auto& c : candidates) {
    if (c.converged) order.push_back(&c);
  }
  std::sort(order.begin(), order.end(), [](const Candidate* a, const Candidate* b) { return detail::better(*a, *b); });

  const Candidate* chosen = nullptr;
  RefinedRoot root;
  if (!std::isfinite(opt.tol) && !order.empty()) {
    chosen = order.front();
    root = {chosen->unknowns, opt.steps, true};
  }
  for (const Candidate* c : order) {
    if (chosen != nullptr) break;
    RefinedRoot r = refine_root(spec, c->unknowns, opt);
    if (r.converged) {
      chosen = c;
      root = std::move(r);
    }
  }

  if (chosen == nullptr) {
    // Nothing feasible: report the smallest coarse-grid residual.
    const Candidate* best = nullptr;
    for (const auto& c : candidates) {
      if (!c.unknowns.empty() && (best == nullptr || c.residual_norm < best->residual_norm)) best = &c;
    }
    PulseSolution sol;
    if (best != nullptr) {
      try {
        sol = simulate(spec, best->unknowns, opt.steps, opt.weights);
      } catch (const IntegrationError&) {
        sol.unknowns.coords = best->unknowns;
        sol.residual_norm = best->residual_norm;
        sol.steps_used = opt.steps;
      }
      sol.seed = best->seed;
    }
    sol.converged = false;
    sol.candidates = std::move(candidates);
    return sol;
  }

  PulseSolution sol = simulate(spec, root.unknowns, root.steps, opt.weights);
  sol.seed = chosen->seed;
  sol.converged = sol.residual_norm <= opt.tol;
  sol.candidates = std::move(candidates);
  return sol;
}

/// Multistart solve; throws SolverError when no start reaches the tolerance.
inline PulseSolution solve(const ProblemSpec& spec, const SolverOptions& opt) {
  PulseSolution sol = solve_best_effort(spec, opt);
  if (!sol.converged) {
    throw SolverError("no start converged; best residual " + std::to_string(sol.residual_norm), sol.residual_norm);
  }
  return sol;
}

}  // namespace pulseforge
