#pragma once

// Right-trivialized control Hamiltonian of the augmented system, its
// maximizing controls, and the costate equations. The costate multiplier of
// the running cost is fixed to −1.
//
//   H = ⟨μ_R, −iH^(0)(u)⟩ + Σ ⟨μ_k, Ω̇_k⟩ + Σ_j μ_{u_j} v_j − L
//   L = ½ (R_u Σ u² + R_v Σ v²)     (v terms only with smoothing)
//
// Costate equations are available in two closed forms (see CostateCase):
//   A: μ̇_R = [−iH^(0), μ_R] + Σ_i [−iH^(i), R μ_1^(i) R†],   μ̇_1^(i) = 0
//   B: one control-independent generator D, order ≤ 3, with
//      K    = μ_1 − ½[μ_2, Ω_1] − ½[μ_3, Ω_2] + 1/12 [[μ_3, Ω_1], Ω_1]
//      μ̇_R = [−iH^(0), μ_R] + [−iD, R K R†]
//      μ̇_1 = ½[A, μ_2] − 1/12 [[Ω_1, A], μ_3] + 1/12 [A, [Ω_1, μ_3]]
//      μ̇_2 = ½[A, μ_3],   μ̇_3 = 0,   A = −i R† D R
// With smoothing, μ̇_{u_j} = −∂H/∂u_j.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "algebra.hpp"
#include "dynamics.hpp"
#include "model.hpp"

namespace pulseforge {

template <class S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Costate paired with AugmentedState (μ_u present only with smoothing).
struct Costate {
  AlgebraElement mu_R;
  std::vector<AlgebraElement> mus;
  std::vector<double> mu_u;
};

template <class S>
class HamiltonianSystem {
 public:
  /// Decoded state ⊕ costate in matrix form.
  struct Point {
    CMatrix<S> R;
    std::vector<CMatrix<S>> omegas;
    std::vector<S> u_state;
    CMatrix<S> mu_R;
    std::vector<CMatrix<S>> mus;
    std::vector<S> mu_u;
  };

  struct CostateRates {
    CMatrix<S> mu_R;
    std::vector<CMatrix<S>> mus;
    std::vector<S> mu_u;
  };

  explicit HamiltonianSystem(const ProblemSpec& spec, S drift_scale = S(1.0))
      : spec_(spec),
        layout_(Layout::of(spec)),
        plan_(spec.disturbances, spec.order),
        basis_(spec.dimension),
        drift_scale_(drift_scale) {
    if (spec.smoothing == 0 && !(spec.weights.R_u > 0.0)) {
      throw ValidationError("unbounded control: R_u must be positive without smoothing");
    }
    if (spec.smoothing == 1 && !(spec.weights.R_v > 0.0)) {
      throw ValidationError("unbounded control: R_v must be positive with smoothing");
    }
    for (const auto& term : spec.terms) {
      Term t;
      t.drift = term.drift.template cast<S>();
      for (const auto& c : term.controls) {
        t.controls.push_back(c.template cast<S>());
        t.has_control.push_back(frobenius_norm(c) != 0.0);
      }
      terms_.push_back(std::move(t));
    }
  }

  const Layout& layout() const { return layout_; }
  const ErrorCurvePlan& plan() const { return plan_; }
  const Basis<S>& basis() const { return basis_; }
  const ProblemSpec& spec() const { return spec_; }
  S drift_scale() const { return drift_scale_; }

  Point decode(const S* y) const {
    const Layout& l = layout_;
    Point pt;
    pt.R = read_matrix(y, l.n);
    for (int k = 0; k < l.p; ++k) pt.omegas.push_back(basis_.combine(y + l.omega_offset(k)));
    pt.u_state.assign(y + l.u_offset(), y + l.state_size());
    pt.mu_R = basis_.combine(y + l.mu_r_offset());
    for (int k = 0; k < l.p; ++k) pt.mus.push_back(basis_.combine(y + l.mu_offset(k)));
    pt.mu_u.assign(y + l.mu_u_offset(), y + l.total_size());
    return pt;
  }

  void encode(const Point& pt, S* y) const {
    const Layout& l = layout_;
    write_matrix(pt.R, y);
    for (int k = 0; k < l.p; ++k) basis_.coordinates(pt.omegas[static_cast<std::size_t>(k)], y + l.omega_offset(k));
    std::copy(pt.u_state.begin(), pt.u_state.end(), y + l.u_offset());
    basis_.coordinates(pt.mu_R, y + l.mu_r_offset());
    for (int k = 0; k < l.p; ++k) basis_.coordinates(pt.mus[static_cast<std::size_t>(k)], y + l.mu_offset(k));
    std::copy(pt.mu_u.begin(), pt.mu_u.end(), y + l.mu_u_offset());
  }

  /// H^(i)(u) including the drift scale.
  CMatrix<S> term_value(int i, std::span<const S> u) const {
    const Term& t = terms_[static_cast<std::size_t>(i)];
    CMatrix<S> h = t.drift * drift_scale_;
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (t.has_control[j]) h += t.controls[j] * u[j];
    }
    return h;
  }

  /// ∂H/∂u_j without the running-cost term:
  /// ⟨μ_R, −iH_j^(0)⟩ + Σ_i ⟨μ_1^(i), −i R† H_j^(i) R⟩.
  std::vector<S> control_gradient(const Point& pt) const {
    const int m = layout_.m;
    std::vector<S> g(static_cast<std::size_t>(m), S(0.0));
    const CMatrix<S> r_dag = pt.R.adjoint();
    for (int j = 0; j < m; ++j) {
      S gj = inner(pt.mu_R, times_minus_i(terms_[0].controls[static_cast<std::size_t>(j)]));
      for (int i = 1; i <= spec_.disturbances; ++i) {
        const Term& t = terms_[static_cast<std::size_t>(i)];
        if (!t.has_control[static_cast<std::size_t>(j)]) continue;
        const CMatrix<S> a = times_minus_i(r_dag * (t.controls[static_cast<std::size_t>(j)] * pt.R));
        // Ω_1^(i) sits at position i−1 in the enumeration.
        gj += inner(pt.mus[static_cast<std::size_t>(i - 1)], a);
      }
      g[static_cast<std::size_t>(j)] = gj;
    }
    return g;
  }

  /// Maximizer of H over the free inputs: u* without smoothing, v* with it.
  std::vector<S> optimal_inputs(const Point& pt) const {
    if (spec_.smoothing == 1) {
      std::vector<S> v(pt.mu_u.size());
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = pt.mu_u[j] / S(spec_.weights.R_v);
      return v;
    }
    auto g = control_gradient(pt);
    for (auto& gj : g) gj = gj / S(spec_.weights.R_u);
    return g;
  }

  /// Physical control values u given the free inputs.
  std::vector<S> physical_controls(const Point& pt, std::span<const S> inputs) const {
    if (spec_.smoothing == 1) return pt.u_state;
    return {inputs.begin(), inputs.end()};
  }

  std::vector<CMatrix<S>> noise_hamiltonians(std::span<const S> u) const {
    std::vector<CMatrix<S>> out;
    for (int i = 1; i <= spec_.disturbances; ++i) out.push_back(term_value(i, u));
    return out;
  }

  S hamiltonian(const Point& pt, std::span<const S> inputs) const {
    const auto u = physical_controls(pt, inputs);
    S h = inner(pt.mu_R, times_minus_i(term_value(0, u)));
    const auto rates = omega_rates(plan_, pt.omegas, conjugated_noise(noise_hamiltonians(u), pt.R));
    for (std::size_t k = 0; k < rates.size(); ++k) h += inner(pt.mus[k], rates[k]);
    S cost(0.0);
    for (const auto& uj : u) cost += uj * uj * S(spec_.weights.R_u);
    if (spec_.smoothing == 1) {
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        h += pt.mu_u[j] * inputs[j];
        cost += inputs[j] * inputs[j] * S(spec_.weights.R_v);
      }
    }
    return h - S(0.5) * cost;
  }

  CostateRates costate_rates(const Point& pt, std::span<const S> u) const {
    const S half(0.5);
    const S twelfth(1.0 / 12.0);
    CostateRates out;
    const CMatrix<S> xi = times_minus_i(term_value(0, u));
    out.mu_R = commutator(xi, pt.mu_R);
    out.mus.assign(pt.mus.size(), CMatrix<S>::zero(layout_.n));
    const CMatrix<S> r_dag = pt.R.adjoint();

    if (spec_.costate_case() == CostateCase::A) {
      for (int i = 1; i <= spec_.disturbances; ++i) {
        const CMatrix<S> noise = times_minus_i(term_value(i, u));
        const CMatrix<S> moved = pt.R * (pt.mus[static_cast<std::size_t>(i - 1)] * r_dag);
        out.mu_R += commutator(noise, moved);
      }
    } else {
      const int r = spec_.order;
      const CMatrix<S> d = times_minus_i(term_value(1, u));
      const CMatrix<S> a = r_dag * (d * pt.R);
      const auto& om1 = pt.omegas[0];
      const auto& mu1 = pt.mus[0];
      CMatrix<S> k = mu1;
      if (r >= 2) k -= commutator(pt.mus[1], om1) * half;
      if (r >= 3) {
        k -= commutator(pt.mus[2], pt.omegas[1]) * half;
        k += commutator(commutator(pt.mus[2], om1), om1) * twelfth;
      }
      out.mu_R += commutator(d, pt.R * (k * r_dag));
      if (r >= 2) out.mus[0] = commutator(a, pt.mus[1]) * half;
      if (r >= 3) {
        out.mus[0] -= commutator(commutator(om1, a), pt.mus[2]) * twelfth;
        out.mus[0] += commutator(a, commutator(om1, pt.mus[2])) * twelfth;
        out.mus[1] = commutator(a, pt.mus[2]) * half;
      }
    }

    if (spec_.smoothing == 1) {
      const auto g = control_gradient(pt);
      out.mu_u.resize(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) out.mu_u[j] = -g[j] + S(spec_.weights.R_u) * u[j];
    }
    return out;
  }

  /// Full autonomous vector field on the flattened state ⊕ costate.
  void rates(const S* y, S* dy) const {
    const Layout& l = layout_;
    const Point pt = decode(y);
    const auto inputs = optimal_inputs(pt);
    const auto u = physical_controls(pt, inputs);

    const CMatrix<S> xi = times_minus_i(term_value(0, u));
    write_matrix(CMatrix<S>(xi * pt.R), dy);
    const auto om_rates = omega_rates(plan_, pt.omegas, conjugated_noise(noise_hamiltonians(u), pt.R));
    for (int k = 0; k < l.p; ++k) basis_.coordinates(om_rates[static_cast<std::size_t>(k)], dy + l.omega_offset(k));
    if (spec_.smoothing == 1) std::copy(inputs.begin(), inputs.end(), dy + l.u_offset());

    const auto cr = costate_rates(pt, u);
    basis_.coordinates(cr.mu_R, dy + l.mu_r_offset());
    for (int k = 0; k < l.p; ++k) basis_.coordinates(cr.mus[static_cast<std::size_t>(k)], dy + l.mu_offset(k));
    std::copy(cr.mu_u.begin(), cr.mu_u.end(), dy + l.mu_u_offset());
  }

  Vector<S> operator()(double /*t*/, const Vector<S>& y) const {
    Vector<S> dy(y.size());
    rates(y.data(), dy.data());
    return dy;
  }

  /// H evaluated at the maximizing inputs.
  S hamiltonian_at(const S* y) const {
    const Point pt = decode(y);
    const auto inputs = optimal_inputs(pt);
    return hamiltonian(pt, inputs);
  }

  /// Physical control values at a flattened point.
  std::vector<S> controls_at(const S* y) const {
    const Point pt = decode(y);
    const auto inputs = optimal_inputs(pt);
    return physical_controls(pt, inputs);
  }

 private:
  struct Term {
    CMatrix<S> drift;
    std::vector<CMatrix<S>> controls;
    std::vector<bool> has_control;
  };

  ProblemSpec spec_;
  Layout layout_;
  ErrorCurvePlan plan_;
  Basis<S> basis_;
  S drift_scale_;
  std::vector<Term> terms_;
};

namespace detail {

inline HamiltonianSystem<double>::Point make_point(const AugmentedState& x, const Costate& mu) {
  HamiltonianSystem<double>::Point pt;
  pt.R = x.R.matrix();
  for (const auto& o : x.omegas) pt.omegas.push_back(o.matrix());
  pt.u_state = x.u_state;
  pt.mu_R = mu.mu_R.matrix();
  for (const auto& m : mu.mus) pt.mus.push_back(m.matrix());
  pt.mu_u = mu.mu_u;
  return pt;
}

inline void check_point(const AugmentedState& x, const Costate& mu, const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  const auto p = static_cast<std::size_t>(l.p);
  const auto ms = static_cast<std::size_t>(l.m * l.s);
  if (x.omegas.size() != p || mu.mus.size() != p || x.u_state.size() != ms || mu.mu_u.size() != ms) {
    throw DimensionError("state/costate do not match the problem layout");
  }
}

}  // namespace detail

/// Control Hamiltonian. `inputs` are the maximized inputs: u without
/// smoothing, v with smoothing (u is then read from the state).
inline double control_hamiltonian(const AugmentedState& x, const Costate& mu, std::span<const double> inputs,
                                  const ProblemSpec& spec, double drift_scale = 1.0) {
  detail::check_point(x, mu, spec);
  if (inputs.size() != static_cast<std::size_t>(spec.controls)) throw DimensionError("wrong number of inputs");
  const HamiltonianSystem<double> sys(spec, drift_scale);
  return sys.hamiltonian(detail::make_point(x, mu), inputs);
}

inline std::vector<double> optimal_control(const AugmentedState& x, const Costate& mu, const ProblemSpec& spec,
                                           double drift_scale = 1.0) {
  detail::check_point(x, mu, spec);
  const HamiltonianSystem<double> sys(spec, drift_scale);
  return sys.optimal_inputs(detail::make_point(x, mu));
}

/// Costate tangent at (x, μ) under physical control u.
inline Costate costate_rhs(const AugmentedState& x, const Costate& mu, std::span<const double> u,
                           const ProblemSpec& spec, double drift_scale = 1.0) {
  detail::check_point(x, mu, spec);
  if (u.size() != static_cast<std::size_t>(spec.controls)) throw DimensionError("wrong number of controls");
  const HamiltonianSystem<double> sys(spec, drift_scale);
  const auto cr = sys.costate_rates(detail::make_point(x, mu), u);
  Costate out;
  out.mu_R = AlgebraElement(cr.mu_R);
  for (const auto& m : cr.mus) out.mus.emplace_back(m);
  out.mu_u = cr.mu_u;
  return out;
}

inline std::vector<double> full_vector_field(std::span<const double> y, const ProblemSpec& spec,
                                             double drift_scale = 1.0) {
  const HamiltonianSystem<double> sys(spec, drift_scale);
  if (y.size() != static_cast<std::size_t>(sys.layout().total_size())) {
    throw DimensionError("flattened state/costate has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(sys.layout().total_size()));
  }
  std::vector<double> dy(y.size());
  sys.rates(y.data(), dy.data());
  return dy;
}

/// Flattened state ⊕ costate for (x, μ).
inline std::vector<double> flatten(const AugmentedState& x, const Costate& mu, const ProblemSpec& spec) {
  detail::check_point(x, mu, spec);
  auto y = flatten(x, spec);
  const auto mr = vectorize(mu.mu_R);
  y.insert(y.end(), mr.begin(), mr.end());
  for (const auto& m : mu.mus) {
    const auto c = vectorize(m);
    y.insert(y.end(), c.begin(), c.end());
  }
  y.insert(y.end(), mu.mu_u.begin(), mu.mu_u.end());
  return y;
}

}  // namespace pulseforge
