#pragma once

// Forward-mode dual numbers carrying a single tangent direction.
//
// The shooting Jacobian is assembled one column at a time: the unknown being
// differentiated is seeded with tangent 1 and every other input with 0, then
// the whole integrator runs on Dual<double>.

#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/Core>

namespace pulseforge {

template <class T>
struct Dual {
  T val;
  T eps;

  Dual() = default;
  constexpr Dual(T v) : val(v), eps(0) {}  // NOLINT: implicit lift of constants
  constexpr Dual(T v, T e) : val(v), eps(e) {}

  static constexpr Dual variable(T v) { return {v, T(1)}; }

  constexpr Dual& operator+=(const Dual& o) {
    val += o.val;
    eps += o.eps;
    return *this;
  }
  constexpr Dual& operator-=(const Dual& o) {
    val -= o.val;
    eps -= o.eps;
    return *this;
  }
  constexpr Dual& operator*=(const Dual& o) {
    eps = eps * o.val + val * o.eps;
    val *= o.val;
    return *this;
  }
  constexpr Dual& operator/=(const Dual& o) {
    eps = (eps * o.val - val * o.eps) / (o.val * o.val);
    val /= o.val;
    return *this;
  }
};

template <class T> constexpr Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> constexpr Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> constexpr Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> constexpr Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <class T> constexpr Dual<T> operator-(const Dual<T>& a) { return {-a.val, -a.eps}; }
template <class T> constexpr Dual<T> operator+(const Dual<T>& a) { return a; }

template <class T> constexpr Dual<T> operator+(Dual<T> a, T b) { a.val += b; return a; }
template <class T> constexpr Dual<T> operator+(T b, Dual<T> a) { a.val += b; return a; }
template <class T> constexpr Dual<T> operator-(Dual<T> a, T b) { a.val -= b; return a; }
template <class T> constexpr Dual<T> operator-(T b, const Dual<T>& a) { return {b - a.val, -a.eps}; }
template <class T> constexpr Dual<T> operator*(const Dual<T>& a, T b) { return {a.val * b, a.eps * b}; }
template <class T> constexpr Dual<T> operator*(T b, const Dual<T>& a) { return {a.val * b, a.eps * b}; }
template <class T> constexpr Dual<T> operator/(const Dual<T>& a, T b) { return {a.val / b, a.eps / b}; }

// Comparisons look at the value only; branches never depend on tangents.
template <class T> constexpr bool operator==(const Dual<T>& a, const Dual<T>& b) { return a.val == b.val; }
template <class T> constexpr bool operator!=(const Dual<T>& a, const Dual<T>& b) { return a.val != b.val; }
template <class T> constexpr bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.val < b.val; }
template <class T> constexpr bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.val > b.val; }
template <class T> constexpr bool operator<=(const Dual<T>& a, const Dual<T>& b) { return a.val <= b.val; }
template <class T> constexpr bool operator>=(const Dual<T>& a, const Dual<T>& b) { return a.val >= b.val; }

template <class T> Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  const T s = sqrt(a.val);
  return {s, a.eps / (T(2) * s)};
}
template <class T> Dual<T> sin(const Dual<T>& a) {
  using std::cos, std::sin;
  return {sin(a.val), a.eps * cos(a.val)};
}
template <class T> Dual<T> cos(const Dual<T>& a) {
  using std::cos, std::sin;
  return {cos(a.val), -a.eps * sin(a.val)};
}
template <class T> Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  const T e = exp(a.val);
  return {e, a.eps * e};
}
template <class T> Dual<T> abs(const Dual<T>& a) { return a.val < T(0) ? -a : a; }
template <class T> bool isfinite(const Dual<T>& a) {
  using std::isfinite;
  return isfinite(a.val) && isfinite(a.eps);
}

template <class T>
std::ostream& operator<<(std::ostream& os, const Dual<T>& a) {
  return os << a.val << "+" << a.eps << "e";
}

/// Primal part of a scalar (identity for plain floating point).
inline double value_of(double x) { return x; }
template <class T> T value_of(const Dual<T>& x) { return x.val; }

/// Tangent part of a scalar (zero for plain floating point).
inline double tangent_of(double) { return 0.0; }
template <class T> T tangent_of(const Dual<T>& x) { return x.eps; }

inline bool is_finite(double x) { return std::isfinite(x); }
template <class T> bool is_finite(const Dual<T>& x) { return isfinite(x); }

}  // namespace pulseforge

namespace Eigen {

template <class T>
struct NumTraits<pulseforge::Dual<T>> : GenericNumTraits<T> {
  using Real = pulseforge::Dual<T>;
  using NonInteger = pulseforge::Dual<T>;
  using Nested = pulseforge::Dual<T>;
  using Literal = pulseforge::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4
  };
  static inline Real epsilon() { return Real(std::numeric_limits<T>::epsilon()); }
  static inline Real dummy_precision() { return Real(1e-12); }
  static inline Real highest() { return Real(std::numeric_limits<T>::max()); }
  static inline Real lowest() { return Real(std::numeric_limits<T>::lowest()); }
  static inline int digits10() { return std::numeric_limits<T>::digits10; }
};

template <class T, class BinaryOp>
struct ScalarBinaryOpTraits<pulseforge::Dual<T>, T, BinaryOp> {
  using ReturnType = pulseforge::Dual<T>;
};
template <class T, class BinaryOp>
struct ScalarBinaryOpTraits<T, pulseforge::Dual<T>, BinaryOp> {
  using ReturnType = pulseforge::Dual<T>;
};

}  // namespace Eigen
