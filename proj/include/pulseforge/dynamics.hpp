#pragma once

// State equations of the augmented system: the ideal propagator
//   Ṙ = −i H^(0)(u) R
// and the disturbance-free error-curve recursion up to third order
//   Ω̇_1^(i)        = A_i
//   Ω̇_2^(i,j)      = −½ [Ω_1^(i), A_j]
//   Ω̇_3^(i,j,k)    = −½ [Ω_2^(i,j), A_k] + 1/12 [Ω_1^(i), [Ω_1^(j), A_k]]
// with A_i = −i R† H^(i)(u) R.

#include <map>
#include <span>
#include <vector>

#include "algebra.hpp"
#include "model.hpp"

namespace pulseforge {

/// Flattened layout of state ⊕ costate.
///
/// State:   R (real parts row-major, then imaginary parts row-major, 2N²),
///          Ω per multi-index (N²−1 coordinates each), u (m, smoothing only).
/// Costate: μ_R, μ per multi-index (N²−1 each), μ_u (m, smoothing only).
struct Layout {
  int n = 2;  // matrix dimension N
  int d = 3;  // N² − 1
  int p = 1;
  int m = 1;
  int s = 0;

  static Layout of(const ProblemSpec& spec) {
    return {spec.dimension, spec.algebra_dim(), error_curve_count(spec.disturbances, spec.order), spec.controls,
            spec.smoothing};
  }

  int r_size() const { return 2 * n * n; }
  int omega_offset(int k) const { return r_size() + k * d; }
  int u_offset() const { return r_size() + p * d; }
  int state_size() const { return r_size() + p * d + m * s; }

  int mu_r_offset() const { return state_size(); }
  int mu_offset(int k) const { return state_size() + (k + 1) * d; }
  int mu_u_offset() const { return state_size() + (p + 1) * d; }
  int costate_size() const { return (p + 1) * d + m * s; }

  int total_size() const { return state_size() + costate_size(); }
};

template <class S>
CMatrix<S> read_matrix(const S* data, int n) {
  CMatrix<S> r = CMatrix<S>::zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      r.re(i, j) = data[i * n + j];
      r.im(i, j) = data[n * n + i * n + j];
    }
  }
  return r;
}

template <class S>
void write_matrix(const CMatrix<S>& r, S* data) {
  const int n = r.dim();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      data[i * n + j] = r.re(i, j);
      data[n * n + i * n + j] = r.im(i, j);
    }
  }
}

/// Positions of the lower-order curves each recursion step needs.
struct ErrorCurvePlan {
  struct Entry {
    int order = 1;
    int prefix = -1;  // position of Ω_{k-1}^(i1..i_{k-1})
    int first = -1;   // position of Ω_1^(i1)
    int second = -1;  // position of Ω_1^(i2)
    int last = 0;     // i_k − 1 (0-based disturbance)
  };

  std::vector<MultiIndex> indices;
  std::vector<Entry> entries;

  ErrorCurvePlan(int n, int r) : indices(enumerate_multi_indices(n, r)) {
    std::map<std::vector<int>, int> position;
    for (std::size_t k = 0; k < indices.size(); ++k) position[indices[k].indices] = static_cast<int>(k);
    for (const auto& mi : indices) {
      const auto& ix = mi.indices;
      Entry e;
      e.order = mi.order();
      e.last = ix.back() - 1;
      if (e.order >= 2) {
        e.prefix = position.at(std::vector<int>(ix.begin(), ix.end() - 1));
        e.first = position.at({ix[0]});
      }
      if (e.order == 3) e.second = position.at({ix[1]});
      entries.push_back(e);
    }
  }

  int size() const { return static_cast<int>(entries.size()); }
};

/// Ω̇ for every multi-index given the conjugated noise generators A_i.
template <class S>
std::vector<CMatrix<S>> omega_rates(const ErrorCurvePlan& plan, const std::vector<CMatrix<S>>& omegas,
                                    const std::vector<CMatrix<S>>& noise) {
  const S half(0.5);
  const S twelfth(1.0 / 12.0);
  std::vector<CMatrix<S>> out;
  out.reserve(plan.entries.size());
  for (const auto& e : plan.entries) {
    const auto& a = noise[static_cast<std::size_t>(e.last)];
    switch (e.order) {
      case 1:
        out.push_back(a);
        break;
      case 2:
        out.push_back(commutator(omegas[static_cast<std::size_t>(e.prefix)], a) * (-half));
        break;
      default: {
        CMatrix<S> rate = commutator(omegas[static_cast<std::size_t>(e.prefix)], a) * (-half);
        rate += commutator(omegas[static_cast<std::size_t>(e.first)],
                           commutator(omegas[static_cast<std::size_t>(e.second)], a)) *
                twelfth;
        out.push_back(rate);
      }
    }
  }
  return out;
}

/// A_i = −i R† H^(i)(u) R for i = 1..n.
template <class S>
std::vector<CMatrix<S>> conjugated_noise(const std::vector<CMatrix<S>>& noise_hamiltonians, const CMatrix<S>& r) {
  std::vector<CMatrix<S>> out;
  out.reserve(noise_hamiltonians.size());
  const CMatrix<S> r_dag = r.adjoint();
  for (const auto& h : noise_hamiltonians) out.push_back(times_minus_i(r_dag * (h * r)));
  return out;
}

/// R, the p error curves and (with smoothing) the control values.
struct AugmentedState {
  GroupElement R;
  std::vector<AlgebraElement> omegas;
  std::vector<double> u_state;

  /// R = I, Ω = 0, u = 0.
  static AugmentedState initial(const ProblemSpec& spec) {
    const Layout l = Layout::of(spec);
    return {GroupElement::identity(spec.dimension),
            std::vector<AlgebraElement>(static_cast<std::size_t>(l.p), AlgebraElement::zero(spec.dimension)),
            std::vector<double>(static_cast<std::size_t>(l.m * l.s), 0.0)};
  }
};

/// −i H^(0)(u) R
inline CMatrix<double> ideal_rhs(const GroupElement& r, std::span<const double> u, const ProblemSpec& spec,
                                 double drift_scale = 1.0) {
  return times_minus_i(hamiltonian_value(spec.terms[0], u, drift_scale)) * r.matrix();
}

inline std::vector<AlgebraElement> omega_rhs(const AugmentedState& x, std::span<const double> u,
                                             const ProblemSpec& spec, double drift_scale = 1.0) {
  const ErrorCurvePlan plan(spec.disturbances, spec.order);
  if (x.omegas.size() != plan.indices.size()) throw DimensionError("state has the wrong number of error curves");
  std::vector<CMatrix<double>> noise_h;
  for (int i = 1; i <= spec.disturbances; ++i) {
    noise_h.push_back(hamiltonian_value(spec.terms[static_cast<std::size_t>(i)], u, drift_scale));
  }
  std::vector<CMatrix<double>> omegas;
  for (const auto& o : x.omegas) omegas.push_back(o.matrix());
  const auto rates = omega_rates(plan, omegas, conjugated_noise(noise_h, x.R.matrix()));
  std::vector<AlgebraElement> out;
  for (const auto& r : rates) out.emplace_back(r);
  return out;
}

inline std::vector<double> flatten(const AugmentedState& x, const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  if (x.omegas.size() != static_cast<std::size_t>(l.p) ||
      x.u_state.size() != static_cast<std::size_t>(l.m * l.s) || x.R.dim() != l.n) {
    throw DimensionError("augmented state does not match the problem layout");
  }
  std::vector<double> out(static_cast<std::size_t>(l.state_size()));
  write_matrix(x.R.matrix(), out.data());
  for (int k = 0; k < l.p; ++k) {
    const auto c = vectorize(x.omegas[static_cast<std::size_t>(k)]);
    std::copy(c.begin(), c.end(), out.begin() + l.omega_offset(k));
  }
  std::copy(x.u_state.begin(), x.u_state.end(), out.begin() + l.u_offset());
  return out;
}

inline AugmentedState unflatten(std::span<const double> y, const ProblemSpec& spec) {
  const Layout l = Layout::of(spec);
  if (y.size() != static_cast<std::size_t>(l.state_size())) {
    throw DimensionError("flattened state has length " + std::to_string(y.size()) + ", expected " +
                         std::to_string(l.state_size()));
  }
  AugmentedState x;
  x.R = GroupElement(read_matrix(y.data(), l.n));
  for (int k = 0; k < l.p; ++k) {
    x.omegas.push_back(devectorize(y.subspan(static_cast<std::size_t>(l.omega_offset(k)),
                                             static_cast<std::size_t>(l.d)),
                                   l.n));
  }
  x.u_state.assign(y.begin() + l.u_offset(), y.begin() + l.state_size());
  return x;
}

}  // namespace pulseforge
