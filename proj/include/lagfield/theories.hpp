#ifndef LAGFIELD_THEORIES_HPP
#define LAGFIELD_THEORIES_HPP

// Reference discrete field theories: the discrete wave and Schrödinger
// densities, their closed-form stencils, travelling-wave speeds, and random
// training trajectories.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/seed.hpp"
#include "lagfield/solver.hpp"

namespace lagfield {

// ---------------------------------------------------------------------------
// Potentials

/// V(u) = u²/2
struct QuadraticPotential {
  template <class S>
  S operator()(const S& u) const {
    return 0.5 * u * u;
  }
  double gradient(double u) const { return u; }
};

/// V(r) = beta r, applied to r = |Ψ|².
struct LinearPotential {
  double beta = 1.0;
  template <class S>
  S operator()(const S& r) const {
    return beta * r;
  }
  double gradient(double /*r*/) const { return beta; }
};

// ---------------------------------------------------------------------------
// Wave

template <class Potential = QuadraticPotential>
struct WaveParams {
  double dt = 0.025;
  double dx = 0.05;
  Potential potential{};
};

/// L_d(a, b, c) = ½((b − a)/Δt)² − ½((c − a)/Δx)² − V(a) on (u[i][j], u[i+1][j], u[i][j+1]).
template <class Potential = QuadraticPotential>
class WaveDensity {
 public:
  explicit WaveDensity(WaveParams<Potential> p = {}) : p_(p) {
    if (!(p_.dt > 0.0) || !(p_.dx > 0.0)) throw Error(ErrorKind::input, "wave spacings must be positive");
  }

  int arity() const { return 3; }
  int components() const { return 1; }
  std::span<const double> parameters() const { return {}; }
  bool linear_in_velocity() const { return false; }
  const WaveParams<Potential>& params() const { return p_; }
  void set_parameters(const std::vector<double>& p) {
    if (!p.empty()) throw Error(ErrorKind::shape, "analytic densities have no parameters");
  }

  template <class P, class S>
  S evaluate(std::span<const P> /*theta*/, std::span<const S> x) const {
    if (x.size() != 3) throw Error(ErrorKind::shape, "wave density takes 3 inputs");
    const S qt = (x[1] - x[0]) / p_.dt;
    const S qx = (x[2] - x[0]) / p_.dx;
    return 0.5 * qt * qt - 0.5 * qx * qx - S(p_.potential(x[0]));
  }

 private:
  WaveParams<Potential> p_;
};

template <class Potential = QuadraticPotential>
WaveDensity<Potential> wave_density(WaveParams<Potential> p = {}) {
  return WaveDensity<Potential>(p);
}

/// Explicit forward solution of the 5-point wave stencil.
template <class Potential = QuadraticPotential>
double wave_del_update(double u_prev, double u, double u_right, double u_left, const WaveParams<Potential>& p = {}) {
  const double r = (p.dt * p.dt) / (p.dx * p.dx);
  return 2.0 * u - u_prev + r * (u_left - 2.0 * u + u_right) - p.dt * p.dt * p.potential.gradient(u);
}

/// Whole-slice explicit update on a periodic grid.
template <class Potential = QuadraticPotential>
std::vector<double> wave_slice_update(std::span<const double> prev, std::span<const double> curr, const Grid2D& g,
                                      const WaveParams<Potential>& p = {}) {
  std::vector<double> next(curr.size());
  const int n = static_cast<int>(curr.size());
  for (int j = 0; j < n; ++j) {
    if (!g.periodic() && (j == 0 || j == n - 1)) {
      next[j] = curr[j];
      continue;
    }
    const int jr = g.periodic() ? spatial_wrap(g, j + 1) : j + 1;
    const int jl = g.periodic() ? spatial_wrap(g, j - 1) : j - 1;
    next[j] = wave_del_update(prev[j], curr[j], curr[jr], curr[jl], p);
  }
  return next;
}

// ---------------------------------------------------------------------------
// Schrödinger

struct SchrodingerParams {
  double dt = 0.01;
  double dx = 0.125;
  double hbar = 1.0;
  LinearPotential potential{};
};

/// Four-point density with Ψ = φ + i p as two real components, evaluated at the
/// cell average m, the time quotient Ψ_t and the space quotient Ψ_x of the cell
/// (u[i][j], u[i+1][j], u[i][j+1], u[i+1][j+1]):
///   L = ħ (p φ_t − φ p_t) − (φ_x² + p_x²) − V(φ² + p²).
class SchrodingerDensity {
 public:
  explicit SchrodingerDensity(SchrodingerParams p = {}) : p_(p) {
    if (!(p_.dt > 0.0) || !(p_.dx > 0.0) || !(p_.hbar > 0.0)) {
      throw Error(ErrorKind::input, "schrodinger spacings and hbar must be positive");
    }
  }

  int arity() const { return 4; }
  int components() const { return 2; }
  std::span<const double> parameters() const { return {}; }
  bool linear_in_velocity() const { return true; }
  const SchrodingerParams& params() const { return p_; }
  void set_parameters(const std::vector<double>& p) {
    if (!p.empty()) throw Error(ErrorKind::shape, "analytic densities have no parameters");
  }

  template <class P, class S>
  S evaluate(std::span<const P> /*theta*/, std::span<const S> x) const {
    if (x.size() != 8) throw Error(ErrorKind::shape, "schrodinger density takes 8 inputs");
    S out(0.0);
    S m[2], qt[2], qx[2];
    for (int k = 0; k < 2; ++k) {
      const S& a = x[0 + k];
      const S& b = x[2 + k];
      const S& c = x[4 + k];
      const S& e = x[6 + k];
      m[k] = 0.25 * (a + b + c + e);
      qt[k] = ((b - a) + (e - c)) / (2.0 * p_.dt);
      qx[k] = ((c - a) + (e - b)) / (2.0 * p_.dx);
    }
    out = p_.hbar * (m[1] * qt[0] - m[0] * qt[1]);
    out = out - (qx[0] * qx[0] + qx[1] * qx[1]);
    return out - S(p_.potential(S(m[0] * m[0] + m[1] * m[1])));
  }

 private:
  SchrodingerParams p_;
};

inline SchrodingerDensity schrodinger_density(SchrodingerParams p = {}) { return SchrodingerDensity(p); }

/// Closed-form 9-point residual 2(iħ D_tΨ + D_x²Ψ − ¼ Σ V′(|m|²) m) as (Re, Im).
inline std::array<double, 2> schrodinger_del_residual(std::span<const double> nine, const SchrodingerParams& p = {}) {
  if (nine.size() != 18) throw Error(ErrorKind::shape, "schrodinger residual needs a 9-point tuple with d = 2");
  auto u = [&](int di, int dj, int k) { return nine[static_cast<std::size_t>(nine_index(di, dj) * 2 + k)]; };
  std::array<double, 2> dtpsi{}, dxx{}, pot{};
  for (int k = 0; k < 2; ++k) {
    dtpsi[k] = ((u(1, -1, k) - u(-1, -1, k)) + 2.0 * (u(1, 0, k) - u(-1, 0, k)) + (u(1, 1, k) - u(-1, 1, k))) /
               (8.0 * p.dt);
    const double w[3] = {1.0, 2.0, 1.0};
    double s = 0.0;
    for (int di = -1; di <= 1; ++di) s += w[di + 1] * (u(di, -1, k) - 2.0 * u(di, 0, k) + u(di, 1, k));
    dxx[k] = s / (4.0 * p.dx * p.dx);
  }
  // cells with lower-left corner (i + ci, j + cj)
  for (int ci = -1; ci <= 0; ++ci) {
    for (int cj = -1; cj <= 0; ++cj) {
      double m[2];
      for (int k = 0; k < 2; ++k) {
        m[k] = 0.25 * (u(ci, cj, k) + u(ci + 1, cj, k) + u(ci, cj + 1, k) + u(ci + 1, cj + 1, k));
      }
      const double vp = p.potential.gradient(m[0] * m[0] + m[1] * m[1]);
      for (int k = 0; k < 2; ++k) pot[k] += 0.25 * vp * m[k];
    }
  }
  // iħ D_tΨ = ħ(−D_t p, D_t φ)
  return {2.0 * (-p.hbar * dtpsi[1] + dxx[0] - pot[0]), 2.0 * (p.hbar * dtpsi[0] + dxx[1] - pot[1])};
}

// ---------------------------------------------------------------------------
// Travelling-wave speeds

struct DispersionQuery {
  int m = 1;
  double b = 1.0;
  int s = 0;
};

/// Smallest positive speed c with
///   cos(κ c Δt) = 1 − Δt²/2 + (Δt²/Δx²)(cos κΔx − 1),  κ = 2πm/b,
/// found by bisection on κcΔt ∈ (0, π].
inline double wave_tw_speed(const DispersionQuery& q, double dt, double dx) {
  if (q.m == 0 || !(q.b > 0.0)) throw Error(ErrorKind::input, "dispersion query needs m != 0 and b > 0");
  const double kappa = 2.0 * std::numbers::pi * std::abs(q.m) / q.b;
  const double rhs = 1.0 - 0.5 * dt * dt + (dt * dt) / (dx * dx) * (std::cos(kappa * dx) - 1.0);
  if (rhs > 1.0 || rhs < -1.0) {
    throw Error(ErrorKind::no_real_solution, "wave dispersion relation has no real solution (rhs = " +
                                                 std::to_string(rhs) + ")");
  }
  double lo = 0.0, hi = std::numbers::pi;
  while (hi - lo > 1e-14) {
    const double mid = 0.5 * (lo + hi);
    if (std::cos(mid) > rhs) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi) / (kappa * dt);
}

/// Speed of the plane wave α exp(iκ(x − ct)) in the discrete Schrödinger theory
/// with V(r) = βr, branch s.
inline double schrodinger_tw_speed(const DispersionQuery& q, const SchrodingerParams& p = {}) {
  if (q.m == 0 || !(q.b > 0.0)) throw Error(ErrorKind::input, "dispersion query needs m != 0 and b > 0");
  const double kappa = 2.0 * std::numbers::pi * q.m / q.b;
  const double half = 0.5 * kappa * p.dx;
  if (std::abs(std::cos(half)) < 1e-12) {
    throw Error(ErrorKind::degenerate_mesh, "κΔx hits the tangent pole");
  }
  const double t = std::tan(half);
  const double arg = (2.0 / p.hbar) * (p.dt / (p.dx * p.dx)) * t * t + p.potential.beta * p.dt / (2.0 * p.hbar);
  return 2.0 / (kappa * p.dt) * (std::atan(arg) + q.s * std::numbers::pi);
}

/// Spurious speeds b(2m̃ + 1)/(2mΔt): the time average of the wave vanishes.
inline double spurious_speed(int m, int m_tilde, double dt, double b) {
  if (m == 0) throw Error(ErrorKind::input, "spurious speed needs m != 0");
  return b * (2.0 * m_tilde + 1.0) / (2.0 * m * dt);
}

/// Continuum limits of the speeds.
inline double wave_continuum_speed(int m, double b) {
  const double k = 2.0 * std::numbers::pi * m / b;
  return std::sqrt(1.0 + 1.0 / (k * k));
}
inline double schrodinger_continuum_speed(int m, double b, double hbar, double beta) {
  const double k = 2.0 * std::numbers::pi * m / b;
  return k / hbar + beta / (hbar * k);
}

/// u[i][j] = α₁ sin(κ(jΔx − c iΔt)) + α₂ cos(κ(jΔx − c iΔt)).
inline Field wave_tw_field(const Grid2D& g, int m, double c, double alpha1 = 1.0, double alpha2 = 0.0) {
  Field f(g, 1);
  const double kappa = 2.0 * std::numbers::pi * m / g.length();
  for (int i = 0; i <= g.n_t; ++i)
    for (int j = 0; j < g.columns(); ++j) {
      const double z = kappa * (j * g.dx - c * i * g.dt);
      f(i, j) = alpha1 * std::sin(z) + alpha2 * std::cos(z);
    }
  return f;
}

/// Ψ[i][j] = α exp(iκ(jΔx − c iΔt)) as (φ, p).
inline Field schrodinger_tw_field(const Grid2D& g, int m, double c, std::complex<double> alpha = 1.0) {
  Field f(g, 2);
  const double kappa = 2.0 * std::numbers::pi * m / g.length();
  for (int i = 0; i <= g.n_t; ++i)
    for (int j = 0; j < g.columns(); ++j) {
      const std::complex<double> v = alpha * std::polar(1.0, kappa * (j * g.dx - c * i * g.dt));
      f(i, j, 0) = v.real();
      f(i, j, 1) = v.imag();
    }
  return f;
}

// ---------------------------------------------------------------------------
// Real discrete Fourier transforms (unnormalized forward, 1/M inverse).

/// Coefficients X_k = Σ_n x_n e^{−2πikn/M} for k = 0..⌊M/2⌋.
inline std::vector<std::complex<double>> rfft(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> s = 0.0;
    for (int j = 0; j < n; ++j) s += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * k * j / n);
    out[k] = s;
  }
  return out;
}

/// Inverse of rfft for a length-M signal, using conjugate symmetry; the
/// imaginary parts of the zero and (even M) Nyquist coefficients are ignored.
inline std::vector<double> irfft(std::span<const std::complex<double>> c, int m) {
  if (static_cast<int>(c.size()) != m / 2 + 1) throw Error(ErrorKind::shape, "irfft needs floor(M/2)+1 coefficients");
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    double s = c[0].real();
    for (int k = 1; k <= m / 2; ++k) {
      const double w = (m % 2 == 0 && k == m / 2) ? 1.0 : 2.0;
      const double ang = 2.0 * std::numbers::pi * k * j / m;
      s += w * (c[k].real() * std::cos(ang) - c[k].imag() * std::sin(ang));
    }
    out[j] = s / m;
  }
  return out;
}

/// Fourier amplitudes γ_j = M e^{−2 j⁴} η_j for j = 0..⌊M/2⌋.
inline std::vector<std::complex<double>> initial_data_coefficients(std::span<const double> eta, int m) {
  std::vector<std::complex<double>> g(eta.size());
  for (std::size_t j = 0; j < eta.size(); ++j) {
    const double jj = static_cast<double>(j);
    g[j] = m * std::exp(-2.0 * jj * jj * jj * jj) * eta[j];
  }
  return g;
}

struct InitialData {
  std::vector<double> u;
  std::vector<double> v;  // empty unless velocities were requested
};

/// Smooth random initial positions from rapidly decaying Fourier modes, plus
/// optional standard-normal velocities.
inline InitialData random_initial_data(std::mt19937_64& rng, int m, bool velocities) {
  if (m < 2) throw Error(ErrorKind::input, "random initial data needs M >= 2");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eta(static_cast<std::size_t>(m / 2 + 1));
  for (double& e : eta) e = normal(rng);
  InitialData out;
  out.u = irfft(initial_data_coefficients(eta, m), m);
  if (velocities) {
    out.v.resize(static_cast<std::size_t>(m));
    for (double& x : out.v) x = normal(rng);
  }
  return out;
}

/// K trajectories of a reference (or any) density from random initial data.
/// Densities linear in velocity get position data only, one draw per component.
template <Density D>
std::vector<Field> generate_trajectories(const D& m, int k, const Grid2D& g, std::uint64_t seed,
                                         const NewtonConfig& cfg = {}, SolveMode mode = SolveMode::timeslice) {
  if (!g.periodic()) throw Error(ErrorKind::capability, "trajectory generation uses periodic grids");
  std::vector<Field> out;
  const int d = m.components();
  for (int t = 0; t < k; ++t) {
    std::mt19937_64 rng(derive_seed(seed, "trajectory", static_cast<std::uint64_t>(t)));
    std::vector<double> u0(static_cast<std::size_t>(g.n_x * d));
    std::vector<double> v0(u0.size());
    const bool need_v = !m.linear_in_velocity();
    for (int c = 0; c < d; ++c) {
      InitialData data = random_initial_data(rng, g.n_x, need_v);
      for (int j = 0; j < g.n_x; ++j) {
        u0[static_cast<std::size_t>(j * d + c)] = data.u[j];
        if (need_v) v0[static_cast<std::size_t>(j * d + c)] = data.v[j];
      }
    }
    try {
      Propagation p = propagate_from_initial(m, u0, need_v ? std::optional(v0) : std::nullopt, g.n_t, g, cfg, mode);
      out.push_back(std::move(p.field));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " in trajectory " + std::to_string(t));
    }
  }
  return out;
}

}  // namespace lagfield

#endif  // LAGFIELD_THEORIES_HPP
