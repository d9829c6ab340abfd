#ifndef LAGFIELD_DUAL_HPP
#define LAGFIELD_DUAL_HPP

// Forward-mode dual numbers with a compile-time number of tangent directions.
// Nesting Dual<Dual<T, N>, N> yields second derivatives; instantiating the base
// with ad::Var gives parameter gradients of input derivatives.

#include <array>
#include <cmath>
#include <type_traits>
#include <utility>

#include "lagfield/ad.hpp"

namespace lagfield {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double primal(double x) { return x; }
inline bool is_zero(double x) { return x == 0.0; }

}  // namespace lagfield

namespace lagfield::ad {

inline Var sigmoid(const Var& x) {
  const double s = lagfield::sigmoid(x.value());
  return unary(s, x, s * (1.0 - s));
}

inline Var softplus(const Var& x) {
  return unary(lagfield::softplus(x.value()), x, lagfield::sigmoid(x.value()));
}

inline double primal(const Var& x) { return x.value(); }
inline bool is_zero(const Var& x) { return x.is_constant() && x.value() == 0.0; }

}  // namespace lagfield::ad

namespace lagfield {

template <class T, int N>
struct Dual;

template <class U>
struct is_dual : std::false_type {};
template <class T, int N>
struct is_dual<Dual<T, N>> : std::true_type {};

template <class T, int N>
struct Dual {
  using value_type = T;
  static constexpr int width = N;

  T v{};
  std::array<T, N> d{};

  Dual() = default;

  template <class U>
    requires(!std::is_same_v<std::remove_cvref_t<U>, Dual> && std::is_constructible_v<T, const U&>)
  Dual(const U& value) : v(T(value)) {}  // NOLINT: scalars lift implicitly

  static Dual variable(const T& value, int direction) {
    Dual x(value);
    x.d[static_cast<std::size_t>(direction)] = T(1.0);
    return x;
  }

  Dual& operator+=(const Dual& o) { return *this = *this + o; }
  Dual& operator-=(const Dual& o) { return *this = *this - o; }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }
  Dual& operator/=(const Dual& o) { return *this = *this / o; }

  friend Dual operator+(const Dual& x, const Dual& y) {
    Dual r;
    r.v = x.v + y.v;
    for (int k = 0; k < N; ++k) r.d[k] = x.d[k] + y.d[k];
    return r;
  }
  friend Dual operator-(const Dual& x, const Dual& y) {
    Dual r;
    r.v = x.v - y.v;
    for (int k = 0; k < N; ++k) r.d[k] = x.d[k] - y.d[k];
    return r;
  }
  friend Dual operator*(const Dual& x, const Dual& y) {
    Dual r;
    r.v = x.v * y.v;
    for (int k = 0; k < N; ++k) r.d[k] = x.d[k] * y.v + x.v * y.d[k];
    return r;
  }
  friend Dual operator/(const Dual& x, const Dual& y) {
    const T inv = T(1.0) / y.v;
    Dual r;
    r.v = x.v * inv;
    for (int k = 0; k < N; ++k) r.d[k] = (x.d[k] - r.v * y.d[k]) * inv;
    return r;
  }
  friend Dual operator-(const Dual& x) {
    Dual r;
    r.v = -x.v;
    for (int k = 0; k < N; ++k) r.d[k] = -x.d[k];
    return r;
  }

  // Scalar overloads avoid lifting the scalar to a full dual.
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator*(const U& s, const Dual& x) {
    Dual r;
    r.v = s * x.v;
    for (int k = 0; k < N; ++k) r.d[k] = s * x.d[k];
    return r;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator*(const Dual& x, const U& s) {
    return s * x;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator/(const Dual& x, const U& s) {
    Dual r;
    r.v = x.v / s;
    for (int k = 0; k < N; ++k) r.d[k] = x.d[k] / s;
    return r;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator+(const Dual& x, const U& s) {
    Dual r = x;
    r.v = x.v + s;
    return r;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator+(const U& s, const Dual& x) {
    return x + s;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator-(const Dual& x, const U& s) {
    Dual r = x;
    r.v = x.v - s;
    return r;
  }
  template <class U>
    requires std::is_convertible_v<U, T> && (!std::is_same_v<U, Dual>)
  friend Dual operator-(const U& s, const Dual& x) {
    Dual r = -x;
    r.v = s - x.v;
    return r;
  }
};

template <class T, int N>
double primal(const Dual<T, N>& x) {
  return primal(x.v);
}

template <class T, int N>
bool is_zero(const Dual<T, N>& x) {
  if (!is_zero(x.v)) return false;
  for (const T& t : x.d)
    if (!is_zero(t)) return false;
  return true;
}

// Applies f with value fx and derivative dfx (both of type T) by the chain rule.
template <class T, int N>
Dual<T, N> chain(const Dual<T, N>& x, T fx, const T& dfx) {
  Dual<T, N> r;
  r.v = std::move(fx);
  for (int k = 0; k < N; ++k) r.d[k] = dfx * x.d[k];
  return r;
}

template <class T, int N>
Dual<T, N> sin(const Dual<T, N>& x) {
  using std::cos;
  using std::sin;
  return chain(x, sin(x.v), cos(x.v));
}
template <class T, int N>
Dual<T, N> cos(const Dual<T, N>& x) {
  using std::cos;
  using std::sin;
  return chain(x, cos(x.v), T(-sin(x.v)));
}
template <class T, int N>
Dual<T, N> exp(const Dual<T, N>& x) {
  using std::exp;
  T e = exp(x.v);
  return chain(x, e, e);
}
template <class T, int N>
Dual<T, N> log(const Dual<T, N>& x) {
  using std::log;
  return chain(x, log(x.v), T(T(1.0) / x.v));
}
template <class T, int N>
Dual<T, N> sqrt(const Dual<T, N>& x) {
  using std::sqrt;
  T s = sqrt(x.v);
  return chain(x, s, T(T(0.5) / s));
}
template <class T, int N>
Dual<T, N> tanh(const Dual<T, N>& x) {
  using std::tanh;
  T t = tanh(x.v);
  return chain(x, t, T(T(1.0) - t * t));
}
template <class T, int N>
Dual<T, N> atan(const Dual<T, N>& x) {
  using std::atan;
  return chain(x, atan(x.v), T(T(1.0) / (T(1.0) + x.v * x.v)));
}
template <class T, int N>
Dual<T, N> sigmoid(const Dual<T, N>& x) {
  T s = sigmoid(x.v);
  return chain(x, s, T(s * (T(1.0) - s)));
}
template <class T, int N>
Dual<T, N> softplus(const Dual<T, N>& x) {
  return chain(x, softplus(x.v), sigmoid(x.v));
}

/// max(x, 0) with the derivative taken from the active branch.
template <class S>
S relu(const S& x) {
  return primal(x) > 0.0 ? x : S(0.0);
}

/// Calls f.template operator()<N>() with the smallest N in {1,2,4,8,16} that is >= n.
template <class F>
decltype(auto) dispatch_width(int n, F&& f) {
  if (n <= 1) return f.template operator()<1>();
  if (n <= 2) return f.template operator()<2>();
  if (n <= 4) return f.template operator()<4>();
  if (n <= 8) return f.template operator()<8>();
  if (n <= 16) return f.template operator()<16>();
  throw Error(ErrorKind::capability, "derivative width above 16 is not supported");
}

}  // namespace lagfield

#endif  // LAGFIELD_DUAL_HPP
