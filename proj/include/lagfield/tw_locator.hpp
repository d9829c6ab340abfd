#ifndef LAGFIELD_TW_LOCATOR_HPP
#define LAGFIELD_TW_LOCATOR_HPP

// Travelling-wave search through a conjugate-symmetric Fourier profile.
//
// A profile holds, per component, ĥ_0 (real) and ĥ_1..ĥ_{K-1} (complex),
// stored as [re0, re1, im1, re2, im2, ...]; with ĥ_{-m} = conj(ĥ_m)
//
//   f(ξ) = re0 + 2 Σ_m (re_m cos(2πmξ/b) − im_m sin(2πmξ/b)).
//
// The lattice fill is u[i][j] = f(jΔx − c iΔt).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/linalg.hpp"
#include "lagfield/seed.hpp"
#include "lagfield/solver.hpp"
#include "lagfield/theories.hpp"

namespace lagfield {

struct WaveProfile {
  double b = 1.0;
  double c = 0.0;
  int d = 1;
  int modes = 1;            // K = number of coefficients ĥ_0..ĥ_{K-1}
  std::vector<double> coef;  // d blocks of 2K − 1 reals

  WaveProfile() = default;
  WaveProfile(double period, double speed, int comps, int k) : b(period), c(speed), d(comps), modes(k) {
    if (!(period > 0.0) || comps < 1 || k < 1) throw Error(ErrorKind::input, "profile needs b > 0, d >= 1, K >= 1");
    coef.assign(static_cast<std::size_t>(comps * block()), 0.0);
  }

  int block() const { return 2 * modes - 1; }

  std::complex<double> hat(int k, int m) const {
    const double* p = coef.data() + static_cast<std::ptrdiff_t>(k * block());
    return m == 0 ? std::complex<double>(p[0], 0.0) : std::complex<double>(p[2 * m - 1], p[2 * m]);
  }
  void set_hat(int k, int m, std::complex<double> h) {
    double* p = coef.data() + static_cast<std::ptrdiff_t>(k * block());
    if (m == 0) {
      p[0] = h.real();
    } else {
      p[2 * m - 1] = h.real();
      p[2 * m] = h.imag();
    }
  }

  /// Optimization vector [c, coefficients].
  std::vector<double> pack() const {
    std::vector<double> v{c};
    v.insert(v.end(), coef.begin(), coef.end());
    return v;
  }
  void unpack(std::span<const double> v) {
    if (v.size() != coef.size() + 1) throw Error(ErrorKind::shape, "profile vector length mismatch");
    c = v[0];
    std::copy(v.begin() + 1, v.end(), coef.begin());
  }
};

/// Number of modes for a lattice of M cells: ⌊M/2⌋ + 1.
inline int modes_for(int m) { return m / 2 + 1; }

/// f_k(ξ) for every component.
inline std::vector<double> profile_eval(const WaveProfile& p, double xi) {
  std::vector<double> out(static_cast<std::size_t>(p.d));
  const double w = 2.0 * std::numbers::pi * xi / p.b;
  for (int k = 0; k < p.d; ++k) {
    const double* a = p.coef.data() + static_cast<std::ptrdiff_t>(k * p.block());
    double s = a[0];
    for (int m = 1; m < p.modes; ++m) s += 2.0 * (a[2 * m - 1] * std::cos(m * w) - a[2 * m] * std::sin(m * w));
    out[k] = s;
  }
  return out;
}

/// df_k/dξ.
inline std::vector<double> profile_slope(const WaveProfile& p, double xi) {
  std::vector<double> out(static_cast<std::size_t>(p.d));
  const double q = 2.0 * std::numbers::pi / p.b;
  const double w = q * xi;
  for (int k = 0; k < p.d; ++k) {
    const double* a = p.coef.data() + static_cast<std::ptrdiff_t>(k * p.block());
    double s = 0.0;
    for (int m = 1; m < p.modes; ++m) s -= 2.0 * m * q * (a[2 * m - 1] * std::sin(m * w) + a[2 * m] * std::cos(m * w));
    out[k] = s;
  }
  return out;
}

/// Profile whose lattice samples f(jΔx) reproduce `samples` (M points, d
/// components interleaved) exactly.
inline WaveProfile profile_from_samples(std::span<const double> samples, int d, double dx, double c) {
  const int m = static_cast<int>(samples.size()) / d;
  if (m * d != static_cast<int>(samples.size()) || m < 2) throw Error(ErrorKind::shape, "sample count mismatch");
  WaveProfile p(m * dx, c, d, modes_for(m));
  std::vector<double> x(static_cast<std::size_t>(m));
  for (int k = 0; k < d; ++k) {
    for (int j = 0; j < m; ++j) x[j] = samples[static_cast<std::size_t>(j * d + k)];
    const auto h = rfft(x);
    for (int q = 0; q < p.modes; ++q) {
      std::complex<double> v = h[q] / static_cast<double>(m);
      if (q > 0 && m % 2 == 0 && q == m / 2) v *= 0.5;
      p.set_hat(k, q, v);
    }
  }
  return p;
}

/// Δx Σ_{m=-K+1}^{K-1} |ĥ_|m||², summed over components.
inline double profile_norm2(const WaveProfile& p, double dx) {
  double s = 0.0;
  for (int k = 0; k < p.d; ++k) {
    const double* a = p.coef.data() + static_cast<std::ptrdiff_t>(k * p.block());
    s += a[0] * a[0];
    for (int q = 1; q < p.block(); ++q) s += 2.0 * a[q] * a[q];
  }
  return dx * s;
}

inline double loss_unit(const WaveProfile& p, double dx) { return std::abs(profile_norm2(p, dx) - 1.0); }

inline WaveProfile normalized(WaveProfile p, double dx) {
  const double n = profile_norm2(p, dx);
  if (!(n > 0.0)) throw Error(ErrorKind::input, "cannot normalize a zero profile");
  for (double& v : p.coef) v /= std::sqrt(n);
  return p;
}

/// N(0, σ²) noise on c and every coefficient.
inline WaveProfile perturbed(WaveProfile p, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "noise"));
  std::normal_distribution<double> n(0.0, sigma);
  p.c += n(rng);
  for (double& v : p.coef) v += n(rng);
  return p;
}

/// Lattice filled with u[i][j] = f(jΔx − c iΔt).
inline Field fill_tw(const WaveProfile& p, const Grid2D& g) {
  Field f(g, p.d);
  for (int i = 0; i <= g.n_t; ++i)
    for (int j = 0; j < g.columns(); ++j) {
      const auto v = profile_eval(p, j * g.dx - p.c * i * g.dt);
      for (int k = 0; k < p.d; ++k) f(i, j, k) = v[k];
    }
  return f;
}

/// Gradient with respect to [c, coefficients] of a function of the filled
/// lattice, given its gradient with respect to the lattice values.
inline std::vector<double> profile_pullback(const WaveProfile& p, const Grid2D& g, std::span<const double> grad_u) {
  const int cols = g.columns();
  if (static_cast<int>(grad_u.size()) != (g.n_t + 1) * cols * p.d) throw Error(ErrorKind::shape, "gradient size mismatch");
  std::vector<double> out(p.coef.size() + 1, 0.0);
  const double q = 2.0 * std::numbers::pi / p.b;
  for (int i = 0; i <= g.n_t; ++i)
    for (int j = 0; j < cols; ++j) {
      const double xi = j * g.dx - p.c * i * g.dt;
      const auto slope = profile_slope(p, xi);
      for (int k = 0; k < p.d; ++k) {
        const double gu = grad_u[static_cast<std::size_t>((i * cols + j) * p.d + k)];
        if (gu == 0.0) continue;
        out[0] += gu * slope[k] * (-i * g.dt);
        double* o = out.data() + 1 + static_cast<std::ptrdiff_t>(k * p.block());
        o[0] += gu;
        for (int m = 1; m < p.modes; ++m) {
          o[2 * m - 1] += gu * 2.0 * std::cos(m * q * xi);
          o[2 * m] -= gu * 2.0 * std::sin(m * q * xi);
        }
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// DEL objective over a whole lattice field.

/// Gradient and full Hessian of L_d in its inputs.
template <Density D>
void input_derivatives(const D& m, std::span<const double> x, std::vector<double>& grad, Mat<double>& hess) {
  const int n = static_cast<int>(x.size());
  grad.assign(static_cast<std::size_t>(n), 0.0);
  if (hess.rows() != n || hess.cols() != n) hess = Mat<double>(n, n);
  dispatch_width(n, [&]<int N>() {
    using S1 = Dual<double, N>;
    using S = Dual<S1, N>;
    std::vector<S> xs(x.begin(), x.end());
    for (int k = 0; k < n; ++k) {
      xs[k].v.d[k] = 1.0;
      xs[k].d[k].v = 1.0;
    }
    const S r = m.template evaluate<double, S>(m.parameters(), std::span<const S>(xs));
    for (int a = 0; a < n; ++a) {
      grad[a] = r.v.d[a];
      for (int b = 0; b < n; ++b) hess(a, b) = r.d[b].d[a];
    }
    return 0;
  });
}

namespace detail {

/// Lattice offsets (di, dj) of each tuple point.
inline std::vector<std::array<int, 2>> tuple_offsets(StencilKind kind) {
  std::vector<std::array<int, 2>> o;
  if (kind == StencilKind::pts3_7stencil) {
    for (const auto& s : seven_offsets) o.push_back({s[0], s[1]});
  } else if (kind == StencilKind::pts4_9stencil) {
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) o.push_back({di, dj});
  } else {
    throw Error(ErrorKind::shape, "lattice objectives need a 3- or 4-point density");
  }
  return o;
}

}  // namespace detail

struct FieldObjective {
  double value = 0.0;         // Σ ‖DEL‖²
  double max_residual = 0.0;  // max |DEL component|
  std::vector<double> grad;   // w.r.t. the lattice values (empty unless requested)
  std::vector<double> residuals;  // DEL components, vertex-major
};

/// Σ over interior vertices of ‖DEL‖² on a lattice field of `d` components.
template <Density D>
FieldObjective del_objective(const D& m, const Grid2D& g, std::span<const double> u, bool want_grad) {
  const StencilKind kind = detail::kind_for_arity(m.arity());
  const int d = m.components();
  const int cols = g.columns();
  if (static_cast<int>(u.size()) != (g.n_t + 1) * cols * d) throw Error(ErrorKind::shape, "field size mismatch");
  const auto offsets = detail::tuple_offsets(kind);
  const VertexRange r = interior_vertices(g, kind, 1);
  const int arity = m.arity();
  FieldObjective out;
  if (want_grad) out.grad.assign(u.size(), 0.0);

  std::vector<int> nodes(offsets.size());
  std::vector<double> x(static_cast<std::size_t>(arity * d)), grad;
  const auto terms = del_terms(kind);
  std::vector<Mat<double>> hess(terms.size());
  std::vector<double> res(static_cast<std::size_t>(d));
  for (int i = r.i_begin; i <= r.i_end; ++i) {
    for (int j = r.j_begin; j <= r.j_end; ++j) {
      for (std::size_t p = 0; p < offsets.size(); ++p) {
        int jj = j + offsets[p][1];
        if (g.periodic()) jj = spatial_wrap(g, jj);
        nodes[p] = (i + offsets[p][0]) * cols + jj;
      }
      std::fill(res.begin(), res.end(), 0.0);
      for (std::size_t ti = 0; ti < terms.size(); ++ti) {
        const DelTerm& t = terms[ti];
        for (int p = 0; p < arity; ++p)
          for (int c = 0; c < d; ++c) x[p * d + c] = u[static_cast<std::size_t>(nodes[t.args[p]] * d + c)];
        if (want_grad) {
          input_derivatives(m, x, grad, hess[ti]);
          for (int c = 0; c < d; ++c) res[c] += grad[t.centre * d + c];
        } else {
          grad = point_gradient<double, double>(m, m.parameters(), std::span<const double>(x), t.centre);
          for (int c = 0; c < d; ++c) res[c] += grad[c];
        }
      }
      for (int c = 0; c < d; ++c) {
        out.value += res[c] * res[c];
        out.max_residual = std::max(out.max_residual, std::abs(res[c]));
        out.residuals.push_back(res[c]);
      }
      if (!want_grad) continue;
      for (std::size_t ti = 0; ti < terms.size(); ++ti) {
        const DelTerm& t = terms[ti];
        for (int p = 0; p < arity; ++p) {
          const std::size_t node = static_cast<std::size_t>(nodes[t.args[p]] * d);
          for (int c = 0; c < d; ++c)
            for (int c2 = 0; c2 < d; ++c2)
              out.grad[node + c2] += 2.0 * res[c] * hess[ti](t.centre * d + c, p * d + c2);
        }
      }
    }
  }
  return out;
}

template <Density D>
double loss_wave(const D& m, const WaveProfile& p, const Grid2D& g) {
  if (p.d != m.components()) throw Error(ErrorKind::shape, "profile components do not match the density");
  const Field f = fill_tw(p, g);
  return del_objective(m, g, f.values(), false).value;
}

/// max |DEL| over the filled lattice.
template <Density D>
double verify_tw(const D& m, const WaveProfile& p, const Grid2D& g) {
  if (p.d != m.components()) throw Error(ErrorKind::shape, "profile components do not match the density");
  const Field f = fill_tw(p, g);
  return del_objective(m, g, f.values(), false).max_residual;
}

struct TwObjective {
  double wave = 0.0;
  double unit = 0.0;
  double max_residual = 0.0;
  std::vector<double> grad_wave;  // w.r.t. [c, coefficients]
  std::vector<double> grad_unit;
};

/// loss_unit and its gradient w.r.t. [c, coefficients] (zero at the kink).
inline void unit_term(const WaveProfile& p, double dx, TwObjective& o) {
  const double n = profile_norm2(p, dx);
  o.unit = std::abs(n - 1.0);
  o.grad_unit.assign(p.coef.size() + 1, 0.0);
  const double s = n > 1.0 ? 1.0 : (n < 1.0 ? -1.0 : 0.0);
  for (int k = 0; k < p.d; ++k) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(k * p.block());
    o.grad_unit[1 + base] = s * dx * 2.0 * p.coef[base];
    for (int q = 1; q < p.block(); ++q) o.grad_unit[1 + base + q] = s * dx * 4.0 * p.coef[base + q];
  }
}

template <Density D>
TwObjective tw_objective(const D& m, const WaveProfile& p, const Grid2D& g) {
  if (p.d != m.components()) throw Error(ErrorKind::shape, "profile components do not match the density");
  const Field f = fill_tw(p, g);
  FieldObjective fo = del_objective(m, g, f.values(), true);
  TwObjective out;
  out.wave = fo.value;
  out.max_residual = fo.max_residual;
  out.grad_wave = profile_pullback(p, g, fo.grad);
  unit_term(p, g.dx, out);
  return out;
}

struct TwSearchConfig {
  int steps = 5000;
  double wave_weight = 1.0;  // objective w·loss_wave + loss_unit
  bool auto_weight = false;  // w = 1/s² from the forward stiffness s at the start
  double lr_speed = 0.01;
  double lr_coef = 0.005;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int polish_iters = 0;  // Levenberg–Marquardt steps on the residual system after Adam
  int restarts = 1;      // independent noise draws in find_tw; the lowest objective wins
  bool project = false;  // rescale the profile to unit norm after every step

  /// Stiffness-scaled weight, faster speed-independent steps, short Adam
  /// memory, unit-norm projection, a polish and three restarts.
  static TwSearchConfig robust() {
    TwSearchConfig c;
    c.steps = 1000;
    c.auto_weight = true;
    c.lr_speed = 0.002;
    c.lr_coef = 0.01;
    c.beta2 = 0.9;
    c.polish_iters = 30;
    c.restarts = 3;
    c.project = true;
    return c;
  }
};

struct TwSearch {
  WaveProfile profile;
  double loss_wave = 0.0;
  double loss_unit = 0.0;
  double max_residual = 0.0;
  int best_step = 0;
  std::vector<double> history;  // weighted objective per step
  int polish_iterations = 0;
  int restart = 0;
  double objective = 0.0;  // w·loss_wave + loss_unit of the returned profile
};

/// Adam over (c, coefficients) minimizing w·loss_wave + loss_unit for any
/// objective returning TwObjective; the best iterate is kept.
template <class Objective>
TwSearch adam_profile_search(const WaveProfile& init, const TwSearchConfig& cfg, double dx, Objective&& objective) {
  if (cfg.steps < 0) throw Error(ErrorKind::input, "search steps must be >= 0");
  WaveProfile cur = init;
  auto retract = [&](std::vector<double>& v) {
    if (!cfg.project) return;
    cur.unpack(v);
    if (profile_norm2(cur, dx) > 0.0) v = normalized(cur, dx).pack();
  };
  std::vector<double> x = cur.pack(), mom(x.size(), 0.0), vel(x.size(), 0.0);
  retract(x);
  TwSearch best;
  double best_total = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= cfg.steps; ++step) {
    cur.unpack(x);
    const TwObjective o = objective(cur);
    const double total = cfg.wave_weight * o.wave + o.unit;
    std::vector<double> grad(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) grad[k] = cfg.wave_weight * o.grad_wave[k] + o.grad_unit[k];
    bool finite = std::isfinite(total);
    for (double v : grad) finite = finite && std::isfinite(v);
    if (!finite) {
      throw NonFiniteError("non-finite travelling-wave objective at step " + std::to_string(step), step, -1, x);
    }
    best.history.push_back(total);
    if (total < best_total) {
      best_total = total;
      best.objective = total;
      best.profile = cur;
      best.loss_wave = o.wave;
      best.loss_unit = o.unit;
      best.max_residual = o.max_residual;
      best.best_step = step;
    }
    if (step == cfg.steps) break;
    const double t = step + 1.0;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t), bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < x.size(); ++k) {
      mom[k] = cfg.beta1 * mom[k] + (1.0 - cfg.beta1) * grad[k];
      vel[k] = cfg.beta2 * vel[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
      const double lr = k == 0 ? cfg.lr_speed : cfg.lr_coef;
      x[k] -= lr * (mom[k] / bc1) / (std::sqrt(vel[k] / bc2) + cfg.eps);
    }
    retract(x);
  }
  return best;
}

/// RMS over interior vertices of ‖∂DEL/∂u^{i+1}_j‖_F / √d on a lattice field.
template <Density D>
double forward_stiffness(const D& m, const Field& f) {
  const StencilKind kind = detail::kind_for_arity(m.arity());
  const auto tuples = extract_stencils(f, kind, 1);
  double s = 0.0;
  for (const StencilTuple& t : tuples) {
    const Mat<double> j = del_forward_jacobian<double, double>(m, m.parameters(), kind, std::span<const double>(t.values), t.dim);
    for (double v : j.data()) s += v * v / t.dim;
  }
  return std::sqrt(s / static_cast<double>(tuples.size()));
}

inline TwSearchConfig with_weight(TwSearchConfig cfg, double stiffness) {
  if (cfg.auto_weight && stiffness > 0.0 && std::isfinite(stiffness)) cfg.wave_weight = 1.0 / (stiffness * stiffness);
  return cfg;
}

/// Levenberg–Marquardt on r(x) = 0 for x = [c, coefficients], with a
/// central-difference Jacobian. Returns the number of accepted steps.
template <class Residuals>
int lm_polish(WaveProfile& p, int iters, Residuals&& residuals) {
  auto norm2 = [](const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
  };
  std::vector<double> x = p.pack();
  std::vector<double> r = residuals(p);
  double f = norm2(r);
  double lambda = 1e-3;
  int accepted = 0;
  WaveProfile trial = p;
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  for (int it = 0; it < iters && f > 0.0; ++it) {
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(r.size()), n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
      std::vector<double> xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      trial.unpack(xp);
      const auto rp = residuals(trial);
      trial.unpack(xm);
      const auto rm = residuals(trial);
      for (std::size_t q = 0; q < r.size(); ++q) jac(static_cast<Eigen::Index>(q), k) = (rp[q] - rm[q]) / (2.0 * h);
    }
    const Eigen::Map<const Eigen::VectorXd> rv(r.data(), static_cast<Eigen::Index>(r.size()));
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * rv;
    bool improved = false;
    for (int tries = 0; tries < 12 && !improved; ++tries) {
      Eigen::MatrixXd a = jtj;
      for (Eigen::Index k = 0; k < n; ++k) a(k, k) += lambda * (jtj(k, k) + 1e-12);
      const Eigen::VectorXd step = a.ldlt().solve(-jtr);
      std::vector<double> xn = x;
      for (Eigen::Index k = 0; k < n; ++k) xn[k] += step(k);
      trial.unpack(xn);
      auto rn = residuals(trial);
      const double fn = norm2(rn);
      if (std::isfinite(fn) && fn < f) {
        x = std::move(xn);
        r = std::move(rn);
        f = fn;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        ++accepted;
      } else {
        lambda *= 4.0;
      }
    }
    if (!improved) break;
  }
  p.unpack(x);
  return accepted;
}

/// DEL residuals divided by `scale`, then the unit-norm defect.
template <Density D>
std::vector<double> tw_residuals(const D& m, const WaveProfile& p, const Grid2D& g, double scale) {
  auto r = del_objective(m, g, fill_tw(p, g).values(), false).residuals;
  for (double& v : r) v /= scale;
  r.push_back(profile_norm2(p, g.dx) - 1.0);
  return r;
}

template <Density D>
TwSearch locate_tw(const D& m, const WaveProfile& init, const Grid2D& g, const TwSearchConfig& cfg = {}) {
  const double s = forward_stiffness(m, fill_tw(init, g));
  const TwSearchConfig c = cfg.auto_weight ? with_weight(cfg, s) : cfg;
  auto objective = [&](const WaveProfile& p) { return tw_objective(m, p, g); };
  TwSearch out = adam_profile_search(init, c, g.dx, objective);
  if (c.polish_iters > 0) {
    const double scale = s > 0.0 && std::isfinite(s) ? s : 1.0;
    out.polish_iterations =
        lm_polish(out.profile, c.polish_iters, [&](const WaveProfile& p) { return tw_residuals(m, p, g, scale); });
    const TwObjective o = objective(out.profile);
    out.loss_wave = o.wave;
    out.loss_unit = o.unit;
    out.max_residual = o.max_residual;
    out.objective = c.wave_weight * o.wave + o.unit;
  }
  return out;
}

/// Mode m with the largest Σ_k |f̂_k(m)|².
inline int dominant_mode(const WaveProfile& p) {
  int best = 0;
  double best_e = -1.0;
  for (int m = 0; m < p.modes; ++m) {
    double e = 0.0;
    for (int k = 0; k < p.d; ++k) e += std::norm(p.hat(k, m));
    if (e > best_e) {
      best_e = e;
      best = m;
    }
  }
  return best;
}

/// Runs `search` from `restarts` noise draws around `base`. Results whose
/// dominant mode matches the base win over those that do not, then the lowest
/// objective. Draw 0 uses `seed` itself.
template <class Search>
TwSearch multistart(const WaveProfile& base, double sigma, std::uint64_t seed, int restarts, Search&& search) {
  if (restarts < 1) throw Error(ErrorKind::input, "restarts must be >= 1");
  const int mode = dominant_mode(base);
  TwSearch best;
  bool best_match = false;
  for (int r = 0; r < restarts; ++r) {
    const std::uint64_t s = r == 0 ? seed : derive_seed(seed, "restart", static_cast<std::uint64_t>(r));
    TwSearch t = search(perturbed(base, sigma, s));
    t.restart = r;
    const bool match = dominant_mode(t.profile) == mode;
    if (r == 0 || (match && !best_match) || (match == best_match && t.objective < best.objective)) {
      best = std::move(t);
      best_match = match;
    }
  }
  return best;
}

/// locate_tw from perturbations of `base` with standard deviation `sigma`.
template <Density D>
TwSearch find_tw(const D& m, const WaveProfile& base, double sigma, std::uint64_t seed, const Grid2D& g,
                 const TwSearchConfig& cfg = {}) {
  return multistart(base, sigma, seed, cfg.restarts, [&](const WaveProfile& init) { return locate_tw(m, init, g, cfg); });
}

// ---------------------------------------------------------------------------
// Restricted action

namespace detail {

/// ξ shift of each density argument: dj Δx − di c Δt for the argument's
/// lattice offset relative to u[i][j].
inline std::vector<double> argument_shifts(StencilKind kind, double c, const Grid2D& g) {
  const auto offsets = tuple_offsets(kind);
  const DelTerm& t = del_terms(kind)[0];
  const auto& base = offsets[t.args[0]];
  std::vector<double> s;
  for (int p = 0; p < stencil_arity(kind); ++p) {
    const auto& o = offsets[t.args[p]];
    s.push_back((o[1] - base[1]) * g.dx - (o[0] - base[0]) * c * g.dt);
  }
  return s;
}

}  // namespace detail

struct RestrictedAction {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. coefficients only
};

/// S(f) = ∫_0^b L_d(f(ξ + s_1), ..., f(ξ + s_p)) dξ by the trapezoid rule on
/// `oversample`·M equispaced points (exact for band-limited integrands).
template <Density D>
RestrictedAction restricted_action(const D& m, const WaveProfile& p, const Grid2D& g, int oversample = 4) {
  if (p.d != m.components()) throw Error(ErrorKind::shape, "profile components do not match the density");
  if (oversample < 1) throw Error(ErrorKind::input, "oversample must be >= 1");
  const StencilKind kind = detail::kind_for_arity(m.arity());
  const auto shifts = detail::argument_shifts(kind, p.c, g);
  const int nq = oversample * g.n_x;
  const double h = p.b / nq;
  const double q = 2.0 * std::numbers::pi / p.b;
  const int d = p.d;
  RestrictedAction out;
  out.grad.assign(p.coef.size(), 0.0);
  std::vector<double> x(static_cast<std::size_t>(m.arity() * d));
  for (int n = 0; n < nq; ++n) {
    const double xi = n * h;
    for (std::size_t a = 0; a < shifts.size(); ++a) {
      const auto v = profile_eval(p, xi + shifts[a]);
      for (int k = 0; k < d; ++k) x[a * d + k] = v[k];
    }
    out.value += h * eval(m, x);
    const auto gx = input_grad(m, x);
    for (std::size_t a = 0; a < shifts.size(); ++a) {
      const double z = q * (xi + shifts[a]);
      for (int k = 0; k < d; ++k) {
        const double w = h * gx[a * d + k];
        double* o = out.grad.data() + static_cast<std::ptrdiff_t>(k * p.block());
        o[0] += w;
        for (int mm = 1; mm < p.modes; ++mm) {
          o[2 * mm - 1] += w * 2.0 * std::cos(mm * z);
          o[2 * mm] -= w * 2.0 * std::sin(mm * z);
        }
      }
    }
  }
  return out;
}

}  // namespace lagfield

#endif  // LAGFIELD_TW_LOCATOR_HPP
