#ifndef LAGFIELD_DENSITY_HPP
#define LAGFIELD_DENSITY_HPP

// Discrete Lagrangian densities and their derivatives.
//
// A density evaluates L_d on p stencil points of d components each:
//
//   template <class P, class S> S evaluate(std::span<const P> theta, std::span<const S> x) const;
//
// P is the parameter scalar (double or ad::Var) and S the input scalar, which
// is always at least as rich as P (the helpers below lift the inputs). Input
// derivatives come from forward-mode duals over S; parameter gradients of any
// such derivative come from running the whole computation with P = ad::Var.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "lagfield/ad.hpp"
#include "lagfield/dual.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/linalg.hpp"

namespace lagfield {

using ad::Var;

template <class D>
concept Density = requires(const D& m) {
  { m.arity() } -> std::convertible_to<int>;
  { m.components() } -> std::convertible_to<int>;
  { m.parameters() } -> std::convertible_to<std::span<const double>>;
  { m.linear_in_velocity() } -> std::convertible_to<bool>;
};

/// Var when either argument is Var, double otherwise.
template <class P, class X>
using common_scalar_t =
    std::conditional_t<std::is_same_v<P, Var> || std::is_same_v<X, Var>, Var, double>;

// ---------------------------------------------------------------------------
// MLP

enum class Activation { tanh, softplus };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "softplus"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  throw Error(ErrorKind::input, "unknown activation '" + s + "'");
}

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., 1
  Activation activation = Activation::tanh;
  std::vector<bool> bias;  // one flag per layer

  int layers() const { return static_cast<int>(widths.size()) - 1; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < layers(); ++l) {
      n += static_cast<std::size_t>(widths[l] * widths[l + 1]);
      if (bias[l]) n += static_cast<std::size_t>(widths[l + 1]);
    }
    return n;
  }

  void validate() const {
    if (widths.size() < 2) throw Error(ErrorKind::input, "mlp needs at least one layer");
    if (widths.back() != 1) throw Error(ErrorKind::input, "mlp output width must be 1");
    if (static_cast<int>(bias.size()) != layers()) throw Error(ErrorKind::input, "mlp needs one bias flag per layer");
    for (int w : widths)
      if (w < 1) throw Error(ErrorKind::input, "mlp widths must be positive");
  }

  /// Hidden layers with bias, output layer without.
  static MlpSpec make(std::vector<int> widths, Activation act) {
    MlpSpec s{std::move(widths), act, {}};
    s.bias.assign(static_cast<std::size_t>(s.layers()), true);
    s.bias.back() = false;
    return s;
  }

  static MlpSpec wave() { return make({3, 10, 10, 1}, Activation::tanh); }
  static MlpSpec schrodinger() { return make({8, 12, 12, 1}, Activation::softplus); }
  static MlpSpec latent(int m_red) { return make({2 * m_red, 10, 10, 1}, Activation::softplus); }
};

/// Weighted sum of w[0..n) with x[0..n) plus an optional bias. Dual inputs are
/// split into components so that reverse mode records one node per sum.
template <class P, class S>
S affine(const P* w, const S* x, std::size_t n, const P* bias) {
  if constexpr (is_dual<S>::value) {
    using T = typename S::value_type;
    std::vector<T> tmp(n);
    S r;
    for (std::size_t k = 0; k < n; ++k) tmp[k] = x[k].v;
    r.v = affine<P, T>(w, tmp.data(), n, bias);
    for (int c = 0; c < S::width; ++c) {
      bool any = false;
      for (std::size_t k = 0; k < n; ++k) {
        tmp[k] = x[k].d[c];
        any = any || !is_zero(tmp[k]);
      }
      if (any) r.d[c] = affine<P, T>(w, tmp.data(), n, nullptr);
    }
    return r;
  } else if constexpr (std::is_same_v<S, Var>) {
    if constexpr (std::is_same_v<P, Var>) {
      return ad::dot(w, x, n, bias ? *bias : Var(0.0));
    } else {
      std::vector<Var> wv(w, w + n);
      return ad::dot(wv.data(), x, n, bias ? Var(*bias) : Var(0.0));
    }
  } else {
    static_assert(std::is_same_v<P, double>, "parameters of type Var need Var-based inputs");
    double acc = bias ? *bias : 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += w[k] * x[k];
    return acc;
  }
}

class MlpDensity {
 public:
  MlpDensity() = default;

  /// Glorot-uniform weights, zero biases.
  MlpDensity(MlpSpec spec, int arity, int components, std::uint64_t seed)
      : spec_(std::move(spec)), arity_(arity), components_(components) {
    check();
    std::mt19937_64 rng(seed);
    params_.clear();
    for (int l = 0; l < spec_.layers(); ++l) {
      const int in = spec_.widths[l];
      const int out = spec_.widths[l + 1];
      const double limit = std::sqrt(6.0 / (in + out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (int k = 0; k < in * out; ++k) params_.push_back(u(rng));
      if (spec_.bias[l]) params_.insert(params_.end(), static_cast<std::size_t>(out), 0.0);
    }
  }

  MlpDensity(MlpSpec spec, int arity, int components, std::vector<double> params)
      : spec_(std::move(spec)), arity_(arity), components_(components), params_(std::move(params)) {
    check();
    if (params_.size() != spec_.parameter_count()) {
      throw Error(ErrorKind::shape, "parameter vector has " + std::to_string(params_.size()) +
                                        " entries, spec needs " + std::to_string(spec_.parameter_count()));
    }
  }

  int arity() const { return arity_; }
  int components() const { return components_; }
  std::span<const double> parameters() const { return params_; }
  bool linear_in_velocity() const { return false; }
  const MlpSpec& spec() const { return spec_; }

  void set_parameters(std::vector<double> p) {
    if (p.size() != params_.size()) throw Error(ErrorKind::shape, "parameter vector length changed");
    params_ = std::move(p);
  }

  template <class P, class S>
  S evaluate(std::span<const P> theta, std::span<const S> x) const {
    if (static_cast<int>(x.size()) != arity_ * components_) {
      throw Error(ErrorKind::shape, "mlp input has length " + std::to_string(x.size()) + ", expected " +
                                        std::to_string(arity_ * components_));
    }
    if (theta.size() != params_.size()) throw Error(ErrorKind::shape, "mlp parameter length mismatch");
    std::vector<S> h(x.begin(), x.end());
    std::vector<S> z;
    std::size_t off = 0;
    for (int l = 0; l < spec_.layers(); ++l) {
      const int in = spec_.widths[l];
      const int out = spec_.widths[l + 1];
      const P* w = theta.data() + off;
      const P* b = spec_.bias[l] ? theta.data() + off + static_cast<std::size_t>(in * out) : nullptr;
      z.assign(static_cast<std::size_t>(out), S(0.0));
      for (int r = 0; r < out; ++r) {
        z[r] = affine<P, S>(w + static_cast<std::size_t>(r * in), h.data(), static_cast<std::size_t>(in),
                            b ? b + r : nullptr);
      }
      off += static_cast<std::size_t>(in * out) + (b ? static_cast<std::size_t>(out) : 0);
      if (l + 1 < spec_.layers()) {
        for (S& v : z) v = activate(v);
      }
      h.swap(z);
    }
    return h[0];
  }

 private:
  void check() const {
    spec_.validate();
    if (spec_.widths.front() != arity_ * components_) {
      throw Error(ErrorKind::shape, "mlp input width must equal arity * components");
    }
  }

  template <class S>
  S activate(const S& v) const {
    using std::tanh;
    return spec_.activation == Activation::tanh ? S(tanh(v)) : S(softplus(v));
  }

  MlpSpec spec_;
  int arity_ = 3;
  int components_ = 1;
  std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Ad-hoc densities from generic callables f(theta, x) -> S.

template <class F>
class LambdaDensity {
 public:
  LambdaDensity(F f, int arity, int components, std::vector<double> params = {}, bool linear_in_velocity = false)
      : f_(std::move(f)),
        arity_(arity),
        components_(components),
        params_(std::move(params)),
        linear_(linear_in_velocity) {}

  int arity() const { return arity_; }
  int components() const { return components_; }
  std::span<const double> parameters() const { return params_; }
  bool linear_in_velocity() const { return linear_; }
  void set_parameters(std::vector<double> p) { params_ = std::move(p); }

  template <class P, class S>
  S evaluate(std::span<const P> theta, std::span<const S> x) const {
    if (static_cast<int>(x.size()) != arity_ * components_) throw Error(ErrorKind::shape, "input length mismatch");
    return S(f_(theta, x));
  }

 private:
  F f_;
  int arity_;
  int components_;
  std::vector<double> params_;
  bool linear_;
};

// ---------------------------------------------------------------------------
// Gauge modification of a 3-point density by a discrete divergence:
//   L + χ1(a) − χ1(b) + χ2(a) − χ2(c) + χ3(b) − χ3(c).

template <Density Base, class C1, class C2, class C3>
class GaugeModified {
 public:
  GaugeModified(Base base, C1 chi1, C2 chi2, C3 chi3)
      : base_(std::move(base)), chi1_(std::move(chi1)), chi2_(std::move(chi2)), chi3_(std::move(chi3)) {
    if (base_.arity() != 3) throw Error(ErrorKind::shape, "gauge modification needs a 3-point density");
    if (base_.components() != 1) throw Error(ErrorKind::shape, "gauge modification is defined for d = 1");
  }

  int arity() const { return 3; }
  int components() const { return 1; }
  std::span<const double> parameters() const { return base_.parameters(); }
  bool linear_in_velocity() const { return base_.linear_in_velocity(); }
  const Base& base() const { return base_; }

  template <class P, class S>
  S evaluate(std::span<const P> theta, std::span<const S> x) const {
    const S& a = x[0];
    const S& b = x[1];
    const S& c = x[2];
    S v = base_.template evaluate<P, S>(theta, x);
    return v + S(chi1_(a)) - S(chi1_(b)) + S(chi2_(a)) - S(chi2_(c)) + S(chi3_(b)) - S(chi3_(c));
  }

 private:
  Base base_;
  C1 chi1_;
  C2 chi2_;
  C3 chi3_;
};

template <Density Base, class C1, class C2, class C3>
GaugeModified<Base, C1, C2, C3> gauge_modify(Base base, C1 chi1, C2 chi2, C3 chi3) {
  return {std::move(base), std::move(chi1), std::move(chi2), std::move(chi3)};
}

// ---------------------------------------------------------------------------
// Derivatives with respect to inputs.

template <class P, class X, Density D>
common_scalar_t<P, X> density_value(const D& m, std::span<const P> theta, std::span<const X> x) {
  using T = common_scalar_t<P, X>;
  std::vector<T> xs(x.begin(), x.end());
  return m.template evaluate<P, T>(theta, std::span<const T>(xs));
}

/// Gradient of L_d with respect to the d components of stencil point `point`.
template <class P, class X, Density D>
std::vector<common_scalar_t<P, X>> point_gradient(const D& m, std::span<const P> theta, std::span<const X> x,
                                                  int point) {
  using T = common_scalar_t<P, X>;
  const int d = m.components();
  return dispatch_width(d, [&]<int N>() {
    using S = Dual<T, N>;
    std::vector<S> xs(x.begin(), x.end());
    for (int c = 0; c < d; ++c) xs[static_cast<std::size_t>(point * d + c)].d[c] = T(1.0);
    const S r = m.template evaluate<P, S>(theta, std::span<const S>(xs));
    std::vector<T> g(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) g[c] = r.d[c];
    return g;
  });
}

/// d×d block ∂²L_d / ∂(point a) ∂(point b); rows index components of a.
template <class P, class X, Density D>
Mat<common_scalar_t<P, X>> hessian_block(const D& m, std::span<const P> theta, std::span<const X> x, int a,
                                         int b) {
  using T = common_scalar_t<P, X>;
  const int d = m.components();
  if (a < 0 || b < 0 || a >= m.arity() || b >= m.arity()) {
    throw Error(ErrorKind::input, "hessian block point index out of range");
  }
  return dispatch_width(d, [&]<int N>() {
    using S1 = Dual<T, N>;
    using S = Dual<S1, N>;
    std::vector<S> xs(x.begin(), x.end());
    for (int c = 0; c < d; ++c) {
      xs[static_cast<std::size_t>(a * d + c)].v.d[c] = T(1.0);
      xs[static_cast<std::size_t>(b * d + c)].d[c].v = T(1.0);
    }
    const S r = m.template evaluate<P, S>(theta, std::span<const S>(xs));
    Mat<T> h(d, d);
    for (int ca = 0; ca < d; ++ca)
      for (int cb = 0; cb < d; ++cb) h(ca, cb) = r.d[cb].d[ca];
    return h;
  });
}

/// Value of L_d at x for a density with its own parameters.
template <Density D>
double eval(const D& m, std::span<const double> x) {
  return density_value<double, double>(m, m.parameters(), x);
}

/// Full input gradient, in chunks of at most 16 directions.
template <Density D>
std::vector<double> input_grad(const D& m, std::span<const double> x) {
  const int n = m.arity() * m.components();
  if (static_cast<int>(x.size()) != n) throw Error(ErrorKind::shape, "input length mismatch");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int start = 0; start < n; start += 16) {
    const int w = std::min(16, n - start);
    dispatch_width(w, [&]<int N>() {
      using S = Dual<double, N>;
      std::vector<S> xs(x.begin(), x.end());
      for (int c = 0; c < w; ++c) xs[static_cast<std::size_t>(start + c)].d[c] = 1.0;
      const S r = m.template evaluate<double, S>(m.parameters(), std::span<const S>(xs));
      for (int c = 0; c < w; ++c) g[static_cast<std::size_t>(start + c)] = r.d[c];
      return 0;
    });
  }
  return g;
}

template <Density D>
Mat<double> mixed_hessian_block(const D& m, std::span<const double> x, int a, int b) {
  if (static_cast<int>(x.size()) != m.arity() * m.components()) throw Error(ErrorKind::shape, "input length mismatch");
  return hessian_block<double, double>(m, m.parameters(), x, a, b);
}

// ---------------------------------------------------------------------------
// Discrete Euler-Lagrange residuals on stencil tuples.

struct DelTerm {
  int args[4];
  int centre;  // position of the stencil centre among args
};

/// Density terms of the DEL at the stencil centre, as tuple indices.
inline std::span<const DelTerm> del_terms(StencilKind kind) {
  static const DelTerm seven[3] = {{{0, 1, 2, -1}, 0}, {{3, 0, 4, -1}, 1}, {{5, 6, 0, -1}, 2}};
  static const DelTerm nine[4] = {{{4, 7, 5, 8}, 0}, {{1, 4, 2, 5}, 1}, {{3, 6, 4, 7}, 2}, {{0, 3, 1, 4}, 3}};
  static const DelTerm chain[2] = {{{0, 1, -1, -1}, 1}, {{1, 2, -1, -1}, 0}};
  switch (kind) {
    case StencilKind::pts3_7stencil: return seven;
    case StencilKind::pts4_9stencil: return nine;
    case StencilKind::pts2_3stencil: return chain;
  }
  return {};
}

/// Index of the forward unknown (u[i+1][j] or q[i+1]) in a tuple.
inline int forward_index(StencilKind kind) {
  switch (kind) {
    case StencilKind::pts3_7stencil: return 1;
    case StencilKind::pts4_9stencil: return 7;
    case StencilKind::pts2_3stencil: return 2;
  }
  return -1;
}

template <class X>
std::vector<X> term_inputs(std::span<const X> tuple, int dim, const DelTerm& t, int arity) {
  std::vector<X> in;
  in.reserve(static_cast<std::size_t>(arity * dim));
  for (int p = 0; p < arity; ++p) {
    const auto first = tuple.begin() + static_cast<std::ptrdiff_t>(t.args[p] * dim);
    in.insert(in.end(), first, first + dim);
  }
  return in;
}

inline void check_kind(int arity, int dim, StencilKind kind, int components) {
  if (stencil_arity(kind) != arity) {
    throw Error(ErrorKind::shape, "stencil kind does not match density arity " + std::to_string(arity));
  }
  if (dim != components) throw Error(ErrorKind::shape, "tuple point dimension does not match density components");
}

/// DEL residual (∂/∂ centre of the summed density terms), d components.
template <class P, class X, Density D>
std::vector<common_scalar_t<P, X>> del_residual(const D& m, std::span<const P> theta, StencilKind kind,
                                                std::span<const X> tuple, int dim) {
  using T = common_scalar_t<P, X>;
  check_kind(m.arity(), dim, kind, m.components());
  if (static_cast<int>(tuple.size()) != tuple_points(kind) * dim) throw Error(ErrorKind::shape, "tuple length mismatch");
  std::vector<T> r(static_cast<std::size_t>(dim), T(0.0));
  for (const DelTerm& t : del_terms(kind)) {
    const std::vector<X> in = term_inputs(tuple, dim, t, m.arity());
    const std::vector<T> g = point_gradient<P, X>(m, theta, std::span<const X>(in), t.centre);
    for (int c = 0; c < dim; ++c) r[c] = r[c] + g[c];
  }
  return r;
}

template <Density D>
std::vector<double> del_residual(const D& m, const StencilTuple& t) {
  return del_residual<double, double>(m, m.parameters(), t.kind, std::span<const double>(t.values), t.dim);
}

/// Jacobian of the DEL residual with respect to the forward unknown. The
/// unknown enters exactly one density term.
template <class P, class X, Density D>
Mat<common_scalar_t<P, X>> del_forward_jacobian(const D& m, std::span<const P> theta, StencilKind kind,
                                                 std::span<const X> tuple, int dim) {
  check_kind(m.arity(), dim, kind, m.components());
  const int f = forward_index(kind);
  for (const DelTerm& t : del_terms(kind)) {
    for (int p = 0; p < m.arity(); ++p) {
      if (t.args[p] != f) continue;
      const std::vector<X> in = term_inputs(tuple, dim, t, m.arity());
      return hessian_block<P, X>(m, theta, std::span<const X>(in), t.centre, p);
    }
  }
  throw Error(ErrorKind::misuse, "forward unknown not found in stencil");
}

// ---------------------------------------------------------------------------
// Parameter gradients.

/// Gradient of functional(θ) at θ, where the functional is any scalar program
/// over ad::Var built from the helpers in this library.
template <class F>
std::pair<double, std::vector<double>> value_and_gradient(std::span<const double> theta, F&& functional) {
  ad::TapeScope scope;
  std::vector<Var> th;
  th.reserve(theta.size());
  for (double t : theta) th.push_back(Var::independent(t));
  const Var y = functional(std::span<const Var>(th));
  scope.get().backward(y.id());
  std::vector<double> g(theta.size());
  for (std::size_t k = 0; k < theta.size(); ++k) g[k] = scope.get().adjoint(th[k].id());
  return {y.value(), g};
}

template <class F>
std::vector<double> parameter_gradient(std::span<const double> theta, F&& functional) {
  return value_and_gradient(theta, std::forward<F>(functional)).second;
}

}  // namespace lagfield

#endif  // LAGFIELD_DENSITY_HPP
