#pragma once

// Forward-mode dual numbers. Nesting Dual<Dual<double>> gives mixed second
// partials, Dual<Dual<Dual<double>>> third partials. Used to obtain exact
// partial derivatives of the closed-form metric families.

#include <cmath>

namespace qpmc::ad {

template <class T>
struct Dual {
  T v{};
  T d{};

  Dual() = default;
  Dual(double c) : v(c), d(0.0) {}  // NOLINT: implicit constant promotion
  Dual(T value, T deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }
};

template <class T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

template <class T> Dual<T> operator+(Dual<T> a, double c) { a.v += c; return a; }
template <class T> Dual<T> operator+(double c, Dual<T> a) { a.v += c; return a; }
template <class T> Dual<T> operator-(Dual<T> a, double c) { a.v -= c; return a; }
template <class T> Dual<T> operator-(double c, const Dual<T>& a) { return {c - a.v, -a.d}; }
template <class T> Dual<T> operator*(Dual<T> a, double c) { a.v *= c; a.d *= c; return a; }
template <class T> Dual<T> operator*(double c, Dual<T> a) { a.v *= c; a.d *= c; return a; }
template <class T> Dual<T> operator/(Dual<T> a, double c) { a.v /= c; a.d /= c; return a; }
template <class T> Dual<T> operator/(double c, const Dual<T>& a) { return Dual<T>(c) / a; }

template <class T> bool operator<(const Dual<T>& a, double c) { return a.v < c; }
template <class T> bool operator>(const Dual<T>& a, double c) { return a.v > c; }
template <class T> bool operator>=(const Dual<T>& a, double c) { return a.v >= c; }
template <class T> bool operator<=(const Dual<T>& a, double c) { return a.v <= c; }

using std::cos;
using std::cosh;
using std::exp;
using std::sin;
using std::sinh;
using std::sqrt;

template <class T> Dual<T> sin(const Dual<T>& a) { return {sin(a.v), cos(a.v) * a.d}; }
template <class T> Dual<T> cos(const Dual<T>& a) { return {cos(a.v), -sin(a.v) * a.d}; }
template <class T> Dual<T> exp(const Dual<T>& a) { T e = exp(a.v); return {e, e * a.d}; }
template <class T> Dual<T> sinh(const Dual<T>& a) { return {sinh(a.v), cosh(a.v) * a.d}; }
template <class T> Dual<T> cosh(const Dual<T>& a) { return {cosh(a.v), sinh(a.v) * a.d}; }
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T r = sqrt(a.v);
  return {r, a.d / (2.0 * r)};
}

inline double value(double x) { return x; }
template <class T> double value(const Dual<T>& x) { return value(x.v); }

}  // namespace qpmc::ad
