#pragma once

#include <cmath>
#include <type_traits>

namespace varlab {

/// Forward-mode scalar. Nesting Dual<Dual<...>> yields higher directional
/// derivatives; all field jets in this project are taken this way, never
/// by divided differences.
template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(double x) : v(x), d() {}  // NOLINT: implicit lift of constants
  Dual(T value, T deriv) : v(std::move(value)), d(std::move(deriv)) {}
};

template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T>
struct dual_depth<Dual<T>>
    : std::integral_constant<int, 1 + dual_depth<T>::value> {};
template <class T>
inline constexpr int dual_depth_v = dual_depth<T>::value;

inline constexpr int kMaxDualDepth = 4;

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  const T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <class T>
Dual<T> operator+(const Dual<T>& a, double b) { return a + Dual<T>(b); }
template <class T>
Dual<T> operator+(double a, const Dual<T>& b) { return Dual<T>(a) + b; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) { return a - Dual<T>(b); }
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) { return a * Dual<T>(b); }
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) { return Dual<T>(a) * b; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) { return a / Dual<T>(b); }
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }

using std::cos;
using std::exp;
using std::log;
using std::pow;
using std::sin;
using std::sqrt;
using std::tanh;

template <class T>
Dual<T> sin(const Dual<T>& a) {
  return {sin(a.v), cos(a.v) * a.d};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  return {cos(a.v), -(sin(a.v) * a.d)};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  const T e = exp(a.v);
  return {e, e * a.d};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), a.d / a.v};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  const T r = sqrt(a.v);
  return {r, a.d / (2.0 * r)};
}
template <class T>
Dual<T> tanh(const Dual<T>& a) {
  const T th = tanh(a.v);
  return {th, (1.0 - th * th) * a.d};
}
template <class T>
Dual<T> pow(const Dual<T>& a, double e) {
  return {pow(a.v, e), e * pow(a.v, e - 1.0) * a.d};
}

using DualD1 = Dual<double>;
using DualD2 = Dual<DualD1>;
using DualD3 = Dual<DualD2>;
using DualD4 = Dual<DualD3>;

}  // namespace varlab
