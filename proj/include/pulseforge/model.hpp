#pragma once

// Control problem definition: Hamiltonian structure, target, robustness
// order, cost weights and smoothing depth.

#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "algebra.hpp"
#include "errors.hpp"

namespace pulseforge {

/// H^(i) = drift + Σ_j u_j controls[j]; every matrix Hermitian.
struct HamiltonianTerm {
  CMatrix<double> drift;
  std::vector<CMatrix<double>> controls;
};

enum class DriftMode { fixed_horizon, fictitious_drift_control };

/// Which closed-form costate equations apply.
///   A: first-order robustness, any number of disturbances and any control
///      structure in the noise generators.
///   B: one disturbance with a control-independent generator, order <= 3.
enum class CostateCase { A, B };

struct CostWeights {
  double R_u = 0.0;
  double R_v = 1.0;
};

struct ProblemSpec {
  int dimension = 2;
  /// terms[0] is the ideal control Hamiltonian, terms[1..n] the noise generators.
  std::vector<HamiltonianTerm> terms;
  GroupElement target;
  int disturbances = 1;  // n
  int controls = 1;      // m
  int order = 1;         // r
  double horizon = 1.0;  // T
  CostWeights weights;
  int smoothing = 0;  // 0 or 1 integrator per control
  DriftMode drift_mode = DriftMode::fixed_horizon;
  /// Append H(0) = 0 to the shooting residual (fictitious drift mode only).
  bool hamiltonian_residual = false;

  int algebra_dim() const { return dimension * dimension - 1; }
  CostateCase costate_case() const { return order == 1 ? CostateCase::A : CostateCase::B; }
};

/// Ordered disturbance indices (1-based) of one error curve.
struct MultiIndex {
  std::vector<int> indices;

  int order() const { return static_cast<int>(indices.size()); }
  auto operator<=>(const MultiIndex&) const = default;

  std::string label() const {
    std::string s;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(indices[i]);
    }
    return s;
  }
};

/// All multi-indices of order 1..r over n disturbances: ascending order, then
/// lexicographic. Permutations are distinct entries.
inline std::vector<MultiIndex> enumerate_multi_indices(int n, int r) {
  std::vector<MultiIndex> out;
  for (int k = 1; k <= r; ++k) {
    std::vector<int> idx(static_cast<std::size_t>(k), 1);
    while (true) {
      out.push_back({idx});
      int pos = k - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n) {
        idx[static_cast<std::size_t>(pos)] = 1;
        --pos;
      }
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
    }
  }
  return out;
}

/// p = n + n² + … + n^r
inline int error_curve_count(int n, int r) {
  int p = 0;
  int power = 1;
  for (int k = 1; k <= r; ++k) {
    power *= n;
    p += power;
  }
  return p;
}

template <class S>
CMatrix<S> hamiltonian_value(const HamiltonianTerm& term, std::span<const S> u, S drift_scale = S(1.0)) {
  if (u.size() != term.controls.size()) {
    throw DimensionError("control vector has length " + std::to_string(u.size()) + ", expected " +
                         std::to_string(term.controls.size()));
  }
  CMatrix<S> h = term.drift.template cast<S>() * drift_scale;
  for (std::size_t j = 0; j < u.size(); ++j) h += term.controls[j].template cast<S>() * u[j];
  return h;
}

inline CMatrix<double> hamiltonian_value(const HamiltonianTerm& term, std::span<const double> u,
                                         double drift_scale = 1.0) {
  return hamiltonian_value<double>(term, u, drift_scale);
}

namespace detail {

inline constexpr double kHermitianRejectTol = 1e-8;

inline CMatrix<double> checked_hermitian(const CMatrix<double>& m, int n, const std::string& where) {
  if (m.dim() != n || m.re.cols() != n) {
    throw ValidationError(where + ": expected a " + std::to_string(n) + "x" + std::to_string(n) +
                          " matrix");
  }
  if (!m.re.allFinite() || !m.im.allFinite()) throw ValidationError(where + ": non-finite entry");
  const double defect = frobenius_norm(m - m.adjoint());
  if (defect > kHermitianRejectTol) {
    throw ValidationError(where + ": matrix is not Hermitian (‖M − M†‖_F = " +
                          std::to_string(defect) + ")");
  }
  return project_hermitian_traceless(m);
}

inline bool is_zero(const CMatrix<double>& m) { return frobenius_norm(m) == 0.0; }

}  // namespace detail

/// Normalizes a raw problem: Hermitian traceless terms, target in SU(N),
/// and checks that the requested order is covered by the costate equations.
inline ProblemSpec validate(ProblemSpec spec) {
  const int n = spec.dimension;
  if (n < 2 || n > kMaxDim) throw ValidationError("dimension must be in [2, 16]");
  if (spec.disturbances < 1) throw ValidationError("at least one disturbance is required");
  if (spec.controls < 1) throw ValidationError("at least one control is required");
  if (spec.order < 1) throw ValidationError("robustness order must be >= 1");
  if (spec.order > 3) throw UnsupportedError("robustness order above 3");
  if (spec.smoothing != 0 && spec.smoothing != 1) {
    throw ValidationError("smoothing depth must be 0 or 1");
  }
  if (spec.terms.size() != static_cast<std::size_t>(spec.disturbances + 1)) {
    throw ValidationError("expected " + std::to_string(spec.disturbances + 1) + " Hamiltonian terms, got " +
                          std::to_string(spec.terms.size()));
  }
  if (!(spec.weights.R_u >= 0.0) || !(spec.weights.R_v >= 0.0)) {
    throw ValidationError("cost weights must be non-negative");
  }
  if (spec.smoothing == 0 && spec.weights.R_u <= 0.0) {
    throw ValidationError("unbounded control: R_u must be positive without smoothing");
  }
  if (spec.smoothing == 1 && spec.weights.R_v <= 0.0) {
    throw ValidationError("unbounded control: R_v must be positive with smoothing");
  }
  if (spec.drift_mode == DriftMode::fictitious_drift_control) {
    spec.horizon = 1.0;
  } else if (spec.hamiltonian_residual) {
    throw ValidationError("the H(0) = 0 residual requires drift_mode fictitious_drift_control");
  }
  if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
    throw ValidationError("horizon must be positive");
  }

  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    auto& term = spec.terms[i];
    const std::string where = "terms[" + std::to_string(i) + "]";
    if (term.controls.size() != static_cast<std::size_t>(spec.controls)) {
      throw ValidationError(where + ": expected " + std::to_string(spec.controls) + " control matrices");
    }
    term.drift = detail::checked_hermitian(term.drift, n, where + ".drift");
    for (std::size_t j = 0; j < term.controls.size(); ++j) {
      term.controls[j] =
          detail::checked_hermitian(term.controls[j], n, where + ".controls[" + std::to_string(j) + "]");
    }
  }

  if (spec.order >= 2) {
    if (spec.disturbances != 1) {
      throw UnsupportedError("order >= 2 requires a single disturbance");
    }
    for (const auto& c : spec.terms[1].controls) {
      if (!detail::is_zero(c)) {
        throw UnsupportedError("order >= 2 with a control-dependent noise generator");
      }
    }
  }

  const auto& g = spec.target.matrix();
  if (g.dim() != n || g.re.cols() != n) throw ValidationError("target: expected an NxN matrix");
  if (!g.re.allFinite() || !g.im.allFinite()) throw ValidationError("target: non-finite entry");
  if (spec.target.unitarity_defect() > 1e-8) throw ValidationError("target: matrix is not unitary");
  const std::complex<double> det = spec.target.determinant();
  if (std::abs(det - 1.0) <= 8.0 * std::numeric_limits<double>::epsilon()) return spec;
  const std::complex<double> root = std::pow(det, 1.0 / n);
  Eigen::MatrixXcd projected = to_complex(g) / root;
  spec.target = GroupElement(from_complex(projected));
  return spec;
}

}  // namespace pulseforge
