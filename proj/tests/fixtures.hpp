#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pulseforge/algebra.hpp"
#include "pulseforge/dynamics.hpp"
#include "pulseforge/model.hpp"
#include "pulseforge/ode.hpp"
#include "pulseforge/pmp.hpp"
#include "pulseforge/shoot.hpp"

namespace fixtures {

using pulseforge::CMatrix;
using pulseforge::GroupElement;
using pulseforge::HamiltonianTerm;
using pulseforge::ProblemSpec;

inline CMatrix<double> zero2() { return CMatrix<double>::zero(2); }

inline GroupElement hadamard() {
  const double a = 1.0 / std::sqrt(2.0);
  CMatrix<double> h = zero2();
  h.re << a, a, a, -a;
  return GroupElement(h);
}

inline GroupElement sqrt_x() {
  const double a = 1.0 / std::sqrt(2.0);
  CMatrix<double> g = CMatrix<double>::identity(2) * a;
  g.im(0, 1) = g.im(1, 0) = -a;
  return GroupElement(g);
}

/// X/Y controls, Z dephasing plus multiplicative amplitude noise, Hadamard.
inline ProblemSpec hadamard_spec(double horizon = 4.0) {
  using namespace pulseforge;
  ProblemSpec s;
  s.dimension = 2;
  s.disturbances = 2;
  s.controls = 2;
  s.order = 1;
  s.horizon = horizon;
  s.smoothing = 1;
  s.weights = {0.0, 1.0};
  s.terms = {{zero2(), {pauli::x(), pauli::y()}},
             {pauli::z(), {zero2(), zero2()}},
             {zero2(), {pauli::x(), pauli::y()}}};
  s.target = hadamard();
  return validate(s);
}

/// X control, Z dephasing to order r, √X target.
inline ProblemSpec sqrtx_spec(int order = 3, double horizon = 3.0, int smoothing = 1) {
  using namespace pulseforge;
  ProblemSpec s;
  s.dimension = 2;
  s.disturbances = 1;
  s.controls = 1;
  s.order = order;
  s.horizon = horizon;
  s.smoothing = smoothing;
  s.weights = smoothing == 1 ? CostWeights{0.0, 1.0} : CostWeights{1.0, 1.0};
  s.terms = {{zero2(), {pauli::x()}}, {pauli::z(), {zero2()}}};
  s.target = sqrt_x();
  return validate(s);
}

/// Small first-order problem that multistart solves in seconds.
inline ProblemSpec cheap_spec() {
  using namespace pulseforge;
  ProblemSpec s;
  s.dimension = 2;
  s.disturbances = 1;
  s.controls = 2;
  s.order = 1;
  s.horizon = 2.0;
  s.smoothing = 0;
  s.weights = {1.0, 1.0};
  s.terms = {{zero2(), {pauli::x(), pauli::y()}}, {pauli::z(), {zero2(), zero2()}}};
  s.target = sqrt_x();
  return validate(s);
}

inline const char* cheap_problem_json() {
  return R"({
  "dimension": 2,
  "disturbances": 1,
  "controls": 2,
  "order": 1,
  "horizon": 2.0,
  "smoothing": 0,
  "weights": { "R_u": 1.0, "R_v": 1.0 },
  "terms": [
    { "drift": [[0, 0], [0, 0]],
      "controls": [ [[0, 1], [1, 0]], [[0, [0, -1]], [[0, 1], 0]] ] },
    { "drift": [[1, 0], [0, -1]],
      "controls": [ [[0, 0], [0, 0]], [[0, 0], [0, 0]] ] }
  ],
  "target": [[0.70710678118654752, [0, -0.70710678118654752]],
             [[0, -0.70710678118654752], 0.70710678118654752]],
  "solver": { "seed": 0, "starts": 4, "steps": 128, "max_iter": 100 },
  "verify": { "grid": "1e-3:3e-2:8" }
}
)";
}

inline std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sigma = 1.0) {
  std::normal_distribution<double> d(0.0, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline pulseforge::AlgebraElement random_algebra(std::mt19937_64& rng, int n, double sigma = 1.0) {
  const auto c = gaussian(rng, static_cast<std::size_t>(n * n - 1), sigma);
  return pulseforge::devectorize(c, n);
}

inline GroupElement random_unitary(std::mt19937_64& rng, int n) {
  return pulseforge::expm(random_algebra(rng, n, 2.0));
}

inline double max_abs_diff(const CMatrix<double>& a, const CMatrix<double>& b) {
  return std::max((a.re - b.re).cwiseAbs().maxCoeff(), (a.im - b.im).cwiseAbs().maxCoeff());
}

using ControlFn = std::function<std::vector<double>(double)>;

/// R and Ω under an open-loop control (no smoothing).
inline pulseforge::Trajectory<Eigen::VectorXd> integrate_state(const ProblemSpec& spec, const ControlFn& u, int steps) {
  const pulseforge::Layout l = pulseforge::Layout::of(spec);
  auto field = [&](double t, const Eigen::VectorXd& y) -> Eigen::VectorXd {
    const pulseforge::AugmentedState x = pulseforge::unflatten(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), spec);
    const auto ut = u(t);
    Eigen::VectorXd dy = Eigen::VectorXd::Zero(y.size());
    pulseforge::write_matrix(pulseforge::ideal_rhs(x.R, ut, spec), dy.data());
    const auto rates = pulseforge::omega_rhs(x, ut, spec);
    for (int k = 0; k < l.p; ++k) {
      const auto c = pulseforge::vectorize(rates[static_cast<std::size_t>(k)]);
      for (int j = 0; j < l.d; ++j) dy[l.omega_offset(k) + j] = c[static_cast<std::size_t>(j)];
    }
    return dy;
  };
  const auto y0 = pulseforge::flatten(pulseforge::AugmentedState::initial(spec), spec);
  const Eigen::VectorXd start = Eigen::Map<const Eigen::VectorXd>(y0.data(), static_cast<Eigen::Index>(y0.size()));
  return pulseforge::rk4_integrate(field, start, spec.horizon, steps);
}

inline CMatrix<double> omega_at(const Eigen::VectorXd& y, const ProblemSpec& spec, int k) {
  const pulseforge::Layout l = pulseforge::Layout::of(spec);
  return pulseforge::devectorize(std::span<const double>(y.data() + l.omega_offset(k), static_cast<std::size_t>(l.d)), l.n).matrix();
}

struct SecondOrderCheck {
  double gap = 0.0;
  double magnitude = 0.0;
};

/// Ω2(T) from the ODE against nested Simpson quadrature of the integrated R,
/// for a single Z noise term under an open-loop control.
inline SecondOrderCheck second_order_check(const ProblemSpec& spec, const ControlFn& u, int intervals) {
  const auto traj = integrate_state(spec, u, intervals);
  const double h = spec.horizon / intervals;

  // A(s) on the grid from the integrated R only.
  std::vector<CMatrix<double>> a;
  for (const auto& y : traj.values) {
    const CMatrix<double> r = pulseforge::read_matrix(y.data(), 2);
    a.push_back(pulseforge::times_minus_i(CMatrix<double>(r.adjoint() * pulseforge::pauli::z() * r)));
  }
  auto integrate = [&](const std::vector<CMatrix<double>>& f, int upto) {
    CMatrix<double> out = CMatrix<double>::zero(2);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        std::vector<double> re;
        std::vector<double> im;
        for (int k = 0; k <= upto; ++k) {
          re.push_back(f[static_cast<std::size_t>(k)].re(i, j));
          im.push_back(f[static_cast<std::size_t>(k)].im(i, j));
        }
        out.re(i, j) = pulseforge::simpson(re, h);
        out.im(i, j) = pulseforge::simpson(im, h);
      }
    }
    return out;
  };
  std::vector<CMatrix<double>> integrand;
  for (int k = 0; k <= intervals; ++k) {
    const CMatrix<double> omega1 = integrate(a, k);
    integrand.push_back(pulseforge::commutator(omega1, a[static_cast<std::size_t>(k)]) * -0.5);
  }
  const CMatrix<double> omega2 = integrate(integrand, intervals);
  return {max_abs_diff(omega_at(traj.final_value(), spec, 1), omega2), pulseforge::frobenius_norm(omega2)};
}

namespace detail {

struct Extrapolated {
  Eigen::VectorXd value;
  double error = std::numeric_limits<double>::infinity();
};

/// Ridders' extrapolation of a vector-valued central difference toward h = 0.
template <class Central>
Extrapolated extrapolate(const Central& central, double h) {
  constexpr std::size_t kTable = 10;
  constexpr double kShrink = 1.4;
  constexpr double kSafe = 2.0;
  std::vector<std::vector<Eigen::VectorXd>> a(kTable, std::vector<Eigen::VectorXd>(kTable));
  a[0][0] = central(h);
  Extrapolated best{a[0][0]};
  for (std::size_t i = 1; i < kTable; ++i) {
    h /= kShrink;
    a[0][i] = central(h);
    double fac = kShrink * kShrink;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink * kShrink;
      const double e = std::max((a[j][i] - a[j - 1][i]).norm(), (a[j][i] - a[j - 1][i - 1]).norm());
      if (e <= best.error) best = {a[j][i], e};
    }
    if ((a[i][i] - a[i - 1][i - 1]).norm() >= kSafe * best.error) break;
  }
  return best;
}

}  // namespace detail

/// Central-difference Jacobian refined by Ridders' polynomial extrapolation.
/// Each column keeps the estimate with the smallest extrapolation error over
/// absolute starting steps 1e-2 down to 1e-5; costate coordinates share one
/// scale, and starts that make the integration fail are skipped.
inline Eigen::MatrixXd ridders_jacobian(std::span<const double> z, const ProblemSpec& spec, int steps) {
  const int nz = static_cast<int>(z.size());
  Eigen::MatrixXd jac(pulseforge::residual_count(spec), nz);
  std::vector<double> zp(z.begin(), z.end());
  for (int c = 0; c < nz; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    auto central = [&](double h) -> Eigen::VectorXd {
      zp[cc] = z[cc] + h;
      const Eigen::VectorXd rp = pulseforge::residual(std::span<const double>(zp), spec, steps);
      zp[cc] = z[cc] - h;
      const Eigen::VectorXd rm = pulseforge::residual(std::span<const double>(zp), spec, steps);
      zp[cc] = z[cc];
      return (rp - rm) / (2.0 * h);
    };
    detail::Extrapolated best;
    for (double h0 : {1e-2, 1e-3, 1e-4, 1e-5}) {
      try {
        detail::Extrapolated e = detail::extrapolate(central, h0);
        if (e.error < best.error) best = std::move(e);
      } catch (const pulseforge::IntegrationError&) {
        zp[cc] = z[cc];
      }
    }
    if (best.value.size() == 0) throw std::runtime_error("ridders_jacobian: every starting step failed");
    jac.col(c) = best.value;
  }
  return jac;
}

/// √X spec with a Z drift, so the costate equations see every term.
inline ProblemSpec driftful_sqrtx(int order) {
  ProblemSpec s = sqrtx_spec(order, 1.0, 1);
  s.terms[0].drift = pulseforge::pauli::z() * 0.3;
  return pulseforge::validate(s);
}

/// Random state ⊕ costate with R on the group.
inline std::vector<double> random_point(const pulseforge::HamiltonianSystem<double>& sys, std::mt19937_64& rng, double scale = 1.0) {
  const pulseforge::Layout& l = sys.layout();
  auto y = gaussian(rng, static_cast<std::size_t>(l.total_size()), scale);
  pulseforge::write_matrix(random_unitary(rng, l.n).matrix(), y.data());
  return y;
}

/// Worst relative gap between the costate rates and −∂H/∂x by central
/// differences. R moves along right-trivialized directions exp(hE)R.
inline double costate_fd_gap(const ProblemSpec& spec, int trials, std::uint64_t seed) {
  const pulseforge::HamiltonianSystem<double> sys(spec);
  const pulseforge::Layout& l = sys.layout();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const pulseforge::Basis<double> basis(l.n);
  const double h = 1e-6;
  double worst = 0.0;
  auto track = [&](double fd, double an) { worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd))); };
  for (int trial = 0; trial < trials; ++trial) {
    const auto y = random_point(sys, rng);
    const auto pt = sys.decode(y.data());
    std::vector<double> inputs(static_cast<std::size_t>(l.m));
    for (auto& v : inputs) v = nd(rng);
    const auto u = sys.physical_controls(pt, inputs);
    const auto cr = sys.costate_rates(pt, u);
    auto H = [&](const auto& p) { return sys.hamiltonian(p, inputs); };

    for (int k = 0; k < l.p; ++k) {
      for (int c = 0; c < l.d; ++c) {
        auto pp = pt;
        auto pm = pt;
        pp.omegas[static_cast<std::size_t>(k)] += basis[c] * h;
        pm.omegas[static_cast<std::size_t>(k)] -= basis[c] * h;
        track(-(H(pp) - H(pm)) / (2 * h), pulseforge::inner(basis[c], cr.mus[static_cast<std::size_t>(k)]));
      }
    }
    const CMatrix<double> transport = pulseforge::commutator(pulseforge::times_minus_i(sys.term_value(0, u)), pt.mu_R);
    for (int c = 0; c < l.d; ++c) {
      std::vector<double> step(static_cast<std::size_t>(l.d), 0.0);
      step[static_cast<std::size_t>(c)] = h;
      const auto ep = pulseforge::expm(pulseforge::devectorize(step, l.n)).matrix();
      step[static_cast<std::size_t>(c)] = -h;
      const auto em = pulseforge::expm(pulseforge::devectorize(step, l.n)).matrix();
      auto pp = pt;
      auto pm = pt;
      pp.R = ep * pt.R;
      pm.R = em * pt.R;
      track(-(H(pp) - H(pm)) / (2 * h), pulseforge::inner(basis[c], CMatrix<double>(cr.mu_R - transport)));
    }
    for (int j = 0; j < l.m * l.s; ++j) {
      auto pp = pt;
      auto pm = pt;
      pp.u_state[static_cast<std::size_t>(j)] += h;
      pm.u_state[static_cast<std::size_t>(j)] -= h;
      track(-(H(pp) - H(pm)) / (2 * h), cr.mu_u[static_cast<std::size_t>(j)]);
    }
  }
  return worst;
}

}  // namespace fixtures
