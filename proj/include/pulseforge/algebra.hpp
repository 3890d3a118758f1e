#pragma once

// Dense linear algebra for su(N) and SU(N).
//
// Complex matrices are stored as a pair of real Eigen matrices so that the
// same code runs on double and on Dual<double>. Storage is inline up to
// kMaxDim, so small systems never touch the heap inside the vector field.

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "dual.hpp"
#include "errors.hpp"

namespace pulseforge {

inline constexpr int kMaxDim = 16;

template <class S>
using RealMatrix =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

template <class S>
struct CMatrix {
  RealMatrix<S> re;
  RealMatrix<S> im;

  static CMatrix zero(int n) { return {RealMatrix<S>::Zero(n, n), RealMatrix<S>::Zero(n, n)}; }
  static CMatrix identity(int n) {
    return {RealMatrix<S>::Identity(n, n), RealMatrix<S>::Zero(n, n)};
  }

  int dim() const { return static_cast<int>(re.rows()); }

  CMatrix adjoint() const { return {re.transpose(), -im.transpose()}; }

  template <class T>
  CMatrix<T> cast() const {
    return {re.template cast<T>(), im.template cast<T>()};
  }

  CMatrix& operator+=(const CMatrix& o) {
    re += o.re;
    im += o.im;
    return *this;
  }
  CMatrix& operator-=(const CMatrix& o) {
    re -= o.re;
    im -= o.im;
    return *this;
  }
  CMatrix& operator*=(const S& a) {
    re *= a;
    im *= a;
    return *this;
  }
};

template <class S>
CMatrix<S> operator+(CMatrix<S> a, const CMatrix<S>& b) {
  return a += b;
}
template <class S>
CMatrix<S> operator-(CMatrix<S> a, const CMatrix<S>& b) {
  return a -= b;
}
template <class S>
CMatrix<S> operator-(const CMatrix<S>& a) {
  return {-a.re, -a.im};
}
template <class S>
CMatrix<S> operator*(const CMatrix<S>& a, const S& s) {
  return {a.re * s, a.im * s};
}
template <class S>
CMatrix<S> operator*(const S& s, const CMatrix<S>& a) {
  return {a.re * s, a.im * s};
}
template <class S>
CMatrix<S> operator*(const CMatrix<S>& a, const CMatrix<S>& b) {
  return {a.re.lazyProduct(b.re) - a.im.lazyProduct(b.im), a.re.lazyProduct(b.im) + a.im.lazyProduct(b.re)};
}

/// i·A
template <class S>
CMatrix<S> times_i(const CMatrix<S>& a) {
  return {-a.im, a.re};
}

/// -i·A
template <class S>
CMatrix<S> times_minus_i(const CMatrix<S>& a) {
  return {a.im, -a.re};
}

template <class S>
CMatrix<S> commutator(const CMatrix<S>& a, const CMatrix<S>& b) {
  return {a.re.lazyProduct(b.re) - a.im.lazyProduct(b.im) - b.re.lazyProduct(a.re) + b.im.lazyProduct(a.im),
          a.re.lazyProduct(b.im) + a.im.lazyProduct(b.re) - b.re.lazyProduct(a.im) - b.im.lazyProduct(a.re)};
}

/// R† H R
template <class S>
CMatrix<S> conjugate(const CMatrix<S>& r, const CMatrix<S>& h) {
  return r.adjoint() * (h * r);
}

/// (1/N) Re tr(X† Y)
template <class S>
S inner(const CMatrix<S>& x, const CMatrix<S>& y) {
  const S sum = x.re.cwiseProduct(y.re).sum() + x.im.cwiseProduct(y.im).sum();
  return sum / S(static_cast<double>(x.dim()));
}

template <class S>
S frobenius_norm(const CMatrix<S>& a) {
  using std::sqrt;
  return sqrt(a.re.squaredNorm() + a.im.squaredNorm());
}

template <class S>
std::complex<double> trace(const CMatrix<S>& a) {
  return {value_of(a.re.trace()), value_of(a.im.trace())};
}

inline Eigen::MatrixXcd to_complex(const CMatrix<double>& a) {
  Eigen::MatrixXcd out(a.dim(), a.dim());
  out.real() = a.re;
  out.imag() = a.im;
  return out;
}

inline CMatrix<double> from_complex(const Eigen::MatrixXcd& a) {
  if (a.rows() != a.cols() || a.rows() > kMaxDim || a.rows() < 1) {
    throw DimensionError("matrix must be square with dimension in [1, 16]");
  }
  return {a.real(), a.imag()};
}

/// (A - A†)/2 with the trace removed.
inline CMatrix<double> project_skew_traceless(const CMatrix<double>& a) {
  CMatrix<double> s{(a.re - a.re.transpose()) * 0.5, (a.im + a.im.transpose()) * 0.5};
  const double tr_im = s.im.trace() / a.dim();
  s.im.diagonal().array() -= tr_im;
  return s;
}

/// (H + H†)/2 with the trace removed.
inline CMatrix<double> project_hermitian_traceless(const CMatrix<double>& a) {
  CMatrix<double> h{(a.re + a.re.transpose()) * 0.5, (a.im - a.im.transpose()) * 0.5};
  const double tr_re = h.re.trace() / a.dim();
  h.re.diagonal().array() -= tr_re;
  return h;
}

/// Orthonormal basis of su(N) under inner(): -i·sqrt(N/2)·λ for the
/// generalized Gell-Mann matrices λ. Ordering: for each pair j<k
/// (lexicographic) the symmetric then antisymmetric element, followed by the
/// N-1 diagonal elements. For N=2 this is (-iX, -iY, -iZ).
inline std::vector<CMatrix<double>> make_su_basis(int n) {
  if (n < 2 || n > kMaxDim) throw DimensionError("su(N) basis needs 2 <= N <= 16");
  const double c = std::sqrt(n / 2.0);
  std::vector<CMatrix<double>> basis;
  basis.reserve(static_cast<std::size_t>(n * n - 1));
  for (int j = 0; j < n; ++j) {
    for (int k = j + 1; k < n; ++k) {
      auto sym = CMatrix<double>::zero(n);
      sym.im(j, k) = -c;
      sym.im(k, j) = -c;
      basis.push_back(sym);
      auto anti = CMatrix<double>::zero(n);
      anti.re(j, k) = -c;
      anti.re(k, j) = c;
      basis.push_back(anti);
    }
  }
  for (int l = 1; l < n; ++l) {
    auto diag = CMatrix<double>::zero(n);
    const double w = c * std::sqrt(2.0 / (l * (l + 1.0)));
    for (int d = 0; d < l; ++d) diag.im(d, d) = -w;
    diag.im(l, l) = w * l;
    basis.push_back(diag);
  }
  return basis;
}

inline const std::vector<CMatrix<double>>& su_basis(int n) {
  static std::mutex mutex;
  static std::map<int, std::vector<CMatrix<double>>> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_su_basis(n)).first;
  return it->second;
}

/// Basis cast to the working scalar, plus coordinate helpers.
template <class S>
class Basis {
 public:
  explicit Basis(int n) : n_(n) {
    for (const auto& b : su_basis(n)) elements_.push_back(b.template cast<S>());
  }

  int dim() const { return n_; }
  int size() const { return static_cast<int>(elements_.size()); }
  const CMatrix<S>& operator[](int k) const { return elements_[static_cast<std::size_t>(k)]; }

  CMatrix<S> combine(const S* coords) const {
    auto out = CMatrix<S>::zero(n_);
    for (int k = 0; k < size(); ++k) {
      const auto& e = elements_[static_cast<std::size_t>(k)];
      out.re += e.re * coords[k];
      out.im += e.im * coords[k];
    }
    return out;
  }

  void coordinates(const CMatrix<S>& a, S* out) const {
    for (int k = 0; k < size(); ++k) out[k] = inner(elements_[static_cast<std::size_t>(k)], a);
  }

 private:
  int n_;
  std::vector<CMatrix<S>> elements_;
};

using CoordinateVector = std::vector<double>;

/// Traceless skew-Hermitian matrix. Construction projects onto su(N).
class AlgebraElement {
 public:
  AlgebraElement() = default;
  explicit AlgebraElement(const CMatrix<double>& m) : m_(project_skew_traceless(m)) {}

  static AlgebraElement zero(int n) { return AlgebraElement(CMatrix<double>::zero(n)); }

  const CMatrix<double>& matrix() const { return m_; }
  int dim() const { return m_.dim(); }

  AlgebraElement operator+(const AlgebraElement& o) const { return AlgebraElement(m_ + o.m_); }
  AlgebraElement operator-(const AlgebraElement& o) const { return AlgebraElement(m_ - o.m_); }
  AlgebraElement operator*(double a) const { return AlgebraElement(m_ * a); }

 private:
  CMatrix<double> m_;
};

/// Unitary matrix. Unitarity is checked on demand, not enforced, since
/// integrated propagators drift slightly off the group.
class GroupElement {
 public:
  GroupElement() = default;
  explicit GroupElement(CMatrix<double> m) : m_(std::move(m)) {}

  static GroupElement identity(int n) { return GroupElement(CMatrix<double>::identity(n)); }

  const CMatrix<double>& matrix() const { return m_; }
  int dim() const { return m_.dim(); }

  /// ‖U†U − I‖_F
  double unitarity_defect() const {
    return frobenius_norm(m_.adjoint() * m_ - CMatrix<double>::identity(dim()));
  }
  std::complex<double> determinant() const { return to_complex(m_).determinant(); }

  bool is_valid(double unitary_tol = 1e-10, double det_tol = 1e-9) const {
    return unitarity_defect() <= unitary_tol && std::abs(determinant() - 1.0) <= det_tol;
  }

  GroupElement operator*(const GroupElement& o) const { return GroupElement(m_ * o.m_); }
  GroupElement adjoint() const { return GroupElement(m_.adjoint()); }

 private:
  CMatrix<double> m_;
};

namespace detail {
inline void require_same_dim(int a, int b) {
  if (a != b) {
    throw DimensionError("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}
}  // namespace detail

inline double inner(const AlgebraElement& x, const AlgebraElement& y) {
  detail::require_same_dim(x.dim(), y.dim());
  return inner(x.matrix(), y.matrix());
}

inline AlgebraElement commutator(const AlgebraElement& x, const AlgebraElement& y) {
  detail::require_same_dim(x.dim(), y.dim());
  return AlgebraElement(commutator(x.matrix(), y.matrix()));
}

/// Ad_{R†}(H) = R† H R
inline AlgebraElement conjugate(const GroupElement& r, const AlgebraElement& h) {
  detail::require_same_dim(r.dim(), h.dim());
  return AlgebraElement(conjugate(r.matrix(), h.matrix()));
}

inline double norm(const AlgebraElement& a) { return std::sqrt(inner(a, a)); }

inline GroupElement expm(const AlgebraElement& a) {
  const int n = a.dim();
  if (n == 2) {
    // A = -i(a·σ), A² = -|a|² I, so exp(A) = cos|a| I + (sin|a|/|a|) A.
    const double theta = norm(a);
    const double sinc = theta < 1e-8 ? 1.0 - theta * theta / 6.0 : std::sin(theta) / theta;
    return GroupElement(CMatrix<double>::identity(2) * std::cos(theta) + a.matrix() * sinc);
  }
  const Eigen::MatrixXcd e = to_complex(a.matrix()).exp();
  return GroupElement(from_complex(e));
}

inline CoordinateVector vectorize(const AlgebraElement& a) {
  const auto& basis = su_basis(a.dim());
  CoordinateVector out(basis.size());
  for (std::size_t k = 0; k < basis.size(); ++k) out[k] = inner(basis[k], a.matrix());
  return out;
}

inline AlgebraElement devectorize(std::span<const double> coords, int n) {
  const auto& basis = su_basis(n);
  if (coords.size() != basis.size()) {
    throw DimensionError("coordinate vector length " + std::to_string(coords.size()) +
                         " != N^2-1 = " + std::to_string(basis.size()));
  }
  auto m = CMatrix<double>::zero(n);
  for (std::size_t k = 0; k < basis.size(); ++k) m += basis[k] * coords[k];
  return AlgebraElement(m);
}

/// Pauli matrices (Hermitian), handy for tests and bundled problems.
namespace pauli {
inline CMatrix<double> x() {
  auto m = CMatrix<double>::zero(2);
  m.re(0, 1) = m.re(1, 0) = 1.0;
  return m;
}
inline CMatrix<double> y() {
  auto m = CMatrix<double>::zero(2);
  m.im(0, 1) = -1.0;
  m.im(1, 0) = 1.0;
  return m;
}
inline CMatrix<double> z() {
  auto m = CMatrix<double>::zero(2);
  m.re(0, 0) = 1.0;
  m.re(1, 1) = -1.0;
  return m;
}
}  // namespace pauli

}  // namespace pulseforge
