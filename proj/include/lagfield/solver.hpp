#ifndef LAGFIELD_SOLVER_HPP
#define LAGFIELD_SOLVER_HPP

// Newton-based forward propagation of discrete field theories: per-vertex
// stencil solves, whole-slice solves with the Λ matrix as Jacobian, and the
// first step from initial positions (and velocities).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/linalg.hpp"

namespace lagfield {

enum class Guess { previous_step, linear_extrapolation };

struct NewtonConfig {
  double tol = 1e-12;
  int max_iter = 50;
  Guess guess = Guess::linear_extrapolation;
  int max_sweeps = 200;  // Gauss-Seidel sweeps per slice in stencil mode

  void validate() const {
    if (!(tol > 0.0)) throw Error(ErrorKind::input, "newton tol must be positive");
    if (max_iter < 1) throw Error(ErrorKind::input, "newton max_iter must be >= 1");
  }
};

struct ConvergenceReport {
  std::vector<double> residuals;               // ∞-norm of the residual at each iterate
  std::vector<std::vector<double>> iterates;   // iterate history, first entry is the guess
  double rho_star = std::numeric_limits<double>::quiet_NaN();  // ‖J⁻¹‖ at the solution
  int iterations = 0;
  bool converged = false;
};

inline double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

namespace detail {

struct LinearSolve {
  std::vector<double> x;
  double sigma_min;
  double sigma_max;
};

inline LinearSolve solve_dense(const Eigen::MatrixXd& a, std::span<const double> b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  LinearSolve out{{}, s.size() ? s.minCoeff() : 0.0, s.size() ? s.maxCoeff() : 0.0};
  if (!(out.sigma_min > 1e-13 * std::max(1.0, out.sigma_max)) || !std::isfinite(out.sigma_max)) {
    throw ConditioningError("Newton Jacobian is numerically singular (sigma_min = " +
                                std::to_string(out.sigma_min) + ")",
                            out.sigma_min);
  }
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  Eigen::VectorXd x = svd.solve(rhs);
  out.x.assign(x.data(), x.data() + x.size());
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-vertex stencil solve.

struct StencilSolve {
  std::vector<double> value;
  ConvergenceReport report;
};

/// Solves the DEL at the stencil centre for the forward unknown. `tuple` holds
/// the full stencil; the entries of the forward slot are used as the initial
/// guess unless `guess` is given.
template <Density D>
StencilSolve solve_stencil(const D& m, StencilKind kind, std::span<const double> tuple, int dim,
                           const NewtonConfig& cfg = {},
                           std::optional<std::vector<double>> guess = std::nullopt) {
  cfg.validate();
  check_kind(m.arity(), dim, kind, m.components());
  if (static_cast<int>(tuple.size()) != tuple_points(kind) * dim) throw Error(ErrorKind::shape, "tuple length mismatch");
  std::vector<double> t(tuple.begin(), tuple.end());
  const std::size_t f = static_cast<std::size_t>(forward_index(kind) * dim);
  if (guess) {
    if (static_cast<int>(guess->size()) != dim) throw Error(ErrorKind::shape, "guess length mismatch");
    std::copy(guess->begin(), guess->end(), t.begin() + static_cast<std::ptrdiff_t>(f));
  } else if (kind == StencilKind::pts3_7stencil || kind == StencilKind::pts2_3stencil) {
    // centre and backward neighbour in time
    const std::size_t c = kind == StencilKind::pts3_7stencil ? 0 : static_cast<std::size_t>(dim);
    const std::size_t b = kind == StencilKind::pts3_7stencil ? static_cast<std::size_t>(3 * dim) : 0;
    for (int k = 0; k < dim; ++k) {
      t[f + k] = cfg.guess == Guess::linear_extrapolation ? 2.0 * t[c + k] - t[b + k] : t[c + k];
    }
  }

  StencilSolve out;
  ConvergenceReport& rep = out.report;
  std::span<const double> theta = m.parameters();
  for (int it = 0;; ++it) {
    std::vector<double> x(t.begin() + static_cast<std::ptrdiff_t>(f), t.begin() + static_cast<std::ptrdiff_t>(f + dim));
    const std::vector<double> r = del_residual<double, double>(m, theta, kind, std::span<const double>(t), dim);
    const double res = inf_norm(r);
    rep.residuals.push_back(res);
    rep.iterates.push_back(x);
    if (!std::isfinite(res)) throw NonConvergenceError("stencil residual is not finite", rep.residuals);
    const Mat<double> j = del_forward_jacobian<double, double>(m, theta, kind, std::span<const double>(t), dim);
    if (res <= cfg.tol) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(j));
      const double smin = svd.singularValues().minCoeff();
      rep.rho_star = smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity();
      rep.converged = true;
      rep.iterations = it;
      break;
    }
    if (it >= cfg.max_iter) {
      throw NonConvergenceError("stencil Newton did not converge in " + std::to_string(cfg.max_iter) + " iterations",
                                rep.residuals);
    }
    std::vector<double> neg(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) neg[k] = -r[k];
    const detail::LinearSolve step = detail::solve_dense(to_eigen(j), neg);
    double step_norm = 0.0, scale = 1.0;
    for (int k = 0; k < dim; ++k) {
      t[f + k] += step.x[k];
      step_norm = std::max(step_norm, std::abs(step.x[k]));
      scale = std::max(scale, std::abs(t[f + k]));
    }
    if (step_norm <= 4.0 * std::numeric_limits<double>::epsilon() * scale && res <= 1e3 * cfg.tol) {
      // round-off floor: the residual cannot be reduced further
      const std::vector<double> r2 = del_residual<double, double>(m, theta, kind, std::span<const double>(t), dim);
      rep.residuals.push_back(inf_norm(r2));
      rep.iterates.emplace_back(t.begin() + static_cast<std::ptrdiff_t>(f),
                                t.begin() + static_cast<std::ptrdiff_t>(f + dim));
      rep.rho_star = 1.0 / step.sigma_min;
      rep.converged = true;
      rep.iterations = it + 1;
      break;
    }
  }
  out.value = rep.iterates.back();
  return out;
}

// ---------------------------------------------------------------------------
// Slices and the Λ matrix.

namespace detail {

/// Values of density cell j built from slices x (time i) and y (time i+1):
/// (x_j, y_j, x_{j+1}) or (x_j, y_j, x_{j+1}, y_{j+1}).
template <class X>
std::vector<X> cell_inputs(const Grid2D& g, int arity, int d, std::span<const X> x, std::span<const X> y, int j) {
  const int jn = g.periodic() ? spatial_wrap(g, j + 1) : j + 1;
  std::vector<X> in;
  in.reserve(static_cast<std::size_t>(arity * d));
  auto push = [&](std::span<const X> s, int col) {
    for (int k = 0; k < d; ++k) in.push_back(s[static_cast<std::size_t>(col * d + k)]);
  };
  push(x, j);
  push(y, j);
  push(x, jn);
  if (arity == 4) push(y, jn);
  return in;
}

inline int cell_count(const Grid2D& g) { return g.n_x; }

/// Columns that are unknowns of a slice solve.
inline std::vector<int> unknown_columns(const Grid2D& g) {
  std::vector<int> cols;
  if (g.periodic()) {
    for (int j = 0; j < g.n_x; ++j) cols.push_back(j);
  } else {
    for (int j = 1; j < g.n_x; ++j) cols.push_back(j);
  }
  return cols;
}

/// Stencil tuple centred at column j from three consecutive slices.
inline std::vector<double> slice_tuple(const Grid2D& g, StencilKind kind, int d, std::span<const double> prev,
                                       std::span<const double> curr, std::span<const double> next, int j) {
  std::vector<double> t;
  auto col = [&](int jj) { return g.periodic() ? spatial_wrap(g, jj) : jj; };
  auto push = [&](std::span<const double> s, int jj) {
    const int c = col(jj);
    for (int k = 0; k < d; ++k) t.push_back(s[static_cast<std::size_t>(c * d + k)]);
  };
  std::span<const double> rows[3] = {prev, curr, next};
  if (kind == StencilKind::pts3_7stencil) {
    for (const auto& o : lagfield::detail::seven_offsets) push(rows[o[0] + 1], j + o[1]);
  } else {
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) push(rows[di + 1], j + dj);
  }
  return t;
}

inline StencilKind kind_for_arity(int arity) {
  if (arity == 3) return StencilKind::pts3_7stencil;
  if (arity == 4) return StencilKind::pts4_9stencil;
  throw Error(ErrorKind::shape, "slice solves need a 3- or 4-point density");
}

inline void check_slice(const Grid2D& g, int d, std::span<const double> s, const char* what) {
  if (static_cast<int>(s.size()) != g.columns() * d) {
    throw Error(ErrorKind::shape, std::string(what) + " does not conform to the grid");
  }
}

}  // namespace detail

/// Λ = ∂² L_Δx^Δt / ∂U^i ∂U^{i+1} over the unknown columns (rows: time-i
/// vertices, columns: time-(i+1) vertices), generic in the scalar type so the
/// regularizers can differentiate through it.
template <class P, class X, Density D>
Mat<common_scalar_t<P, X>> assemble_lambda(const D& m, std::span<const P> theta, std::span<const X> u_i,
                                           std::span<const X> u_next, const Grid2D& g) {
  using T = common_scalar_t<P, X>;
  const int d = m.components();
  const int p = m.arity();
  if (p != 3 && p != 4) throw Error(ErrorKind::shape, "Λ needs a 3- or 4-point density");
  if (static_cast<int>(u_i.size()) != g.columns() * d || static_cast<int>(u_next.size()) != g.columns() * d) {
    throw Error(ErrorKind::shape, "slices do not conform to the grid");
  }
  const std::vector<int> cols = detail::unknown_columns(g);
  const int n = static_cast<int>(cols.size());
  std::vector<int> pos(static_cast<std::size_t>(g.columns()), -1);
  for (int k = 0; k < n; ++k) pos[cols[k]] = k;
  Mat<T> lam(n * d, n * d);
  auto add = [&](int row_col, int col_col, const Mat<T>& h) {
    const int r = pos[row_col], c = pos[col_col];
    if (r < 0 || c < 0) return;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) lam(r * d + a, c * d + b) = lam(r * d + a, c * d + b) + h(a, b);
  };
  for (int j = 0; j < detail::cell_count(g); ++j) {
    const int jn = g.periodic() ? spatial_wrap(g, j + 1) : j + 1;
    const std::vector<X> in = detail::cell_inputs<X>(g, p, d, u_i, u_next, j);
    const std::span<const X> s(in);
    add(j, j, hessian_block<P, X>(m, theta, s, 0, 1));      // a, b
    add(jn, j, hessian_block<P, X>(m, theta, s, 2, 1));     // c, b
    if (p == 4) {
      add(j, jn, hessian_block<P, X>(m, theta, s, 0, 3));   // a, e
      add(jn, jn, hessian_block<P, X>(m, theta, s, 2, 3));  // c, e
    }
  }
  return lam;
}

template <Density D>
Mat<double> assemble_lambda(const D& m, std::span<const double> u_i, std::span<const double> u_next, const Grid2D& g) {
  return assemble_lambda<double, double>(m, m.parameters(), u_i, u_next, g);
}

/// DEL residuals of slice i at the unknown columns.
template <Density D>
std::vector<double> slice_residual(const D& m, std::span<const double> prev, std::span<const double> curr,
                                   std::span<const double> next, const Grid2D& g) {
  const int d = m.components();
  const StencilKind kind = detail::kind_for_arity(m.arity());
  std::vector<double> r;
  for (int j : detail::unknown_columns(g)) {
    const std::vector<double> t = detail::slice_tuple(g, kind, d, prev, curr, next, j);
    const std::vector<double> rj = del_residual<double, double>(m, m.parameters(), kind, std::span<const double>(t), d);
    r.insert(r.end(), rj.begin(), rj.end());
  }
  return r;
}

struct SliceSolve {
  std::vector<double> slice;
  ConvergenceReport report;
};

namespace detail {

/// Newton on a slice map F(Y) = 0 with Jacobian J(Y), over the unknown columns of Y.
template <class Residual, class Jacobian>
SliceSolve newton_slice(const Grid2D& g, int d, std::vector<double> y, const NewtonConfig& cfg, Residual&& residual,
                        Jacobian&& jacobian, const char* what) {
  cfg.validate();
  const std::vector<int> cols = unknown_columns(g);
  SliceSolve out;
  ConvergenceReport& rep = out.report;
  auto gather = [&](const std::vector<double>& s) {
    std::vector<double> v;
    for (int c : cols)
      for (int k = 0; k < d; ++k) v.push_back(s[static_cast<std::size_t>(c * d + k)]);
    return v;
  };
  for (int it = 0;; ++it) {
    const std::vector<double> r = residual(y);
    const double res = inf_norm(r);
    rep.residuals.push_back(res);
    rep.iterates.push_back(gather(y));
    if (!std::isfinite(res)) throw NonConvergenceError(std::string(what) + ": residual is not finite", rep.residuals);
    const Mat<double> j = jacobian(y);
    if (res <= cfg.tol) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(j));
      const double smin = svd.singularValues().minCoeff();
      rep.rho_star = smin > 0.0 ? 1.0 / smin : std::numeric_limits<double>::infinity();
      rep.converged = true;
      rep.iterations = it;
      break;
    }
    if (it >= cfg.max_iter) {
      throw NonConvergenceError(std::string(what) + ": Newton did not converge in " + std::to_string(cfg.max_iter) +
                                    " iterations",
                                rep.residuals);
    }
    std::vector<double> neg(r.size());
    for (std::size_t k = 0; k < r.size(); ++k) neg[k] = -r[k];
    const LinearSolve step = solve_dense(to_eigen(j), neg);
    double step_norm = 0.0, scale = 1.0;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      for (int c = 0; c < d; ++c) {
        double& v = y[static_cast<std::size_t>(cols[k] * d + c)];
        v += step.x[k * static_cast<std::size_t>(d) + c];
        step_norm = std::max(step_norm, std::abs(step.x[k * static_cast<std::size_t>(d) + c]));
        scale = std::max(scale, std::abs(v));
      }
    }
    if (step_norm <= 4.0 * std::numeric_limits<double>::epsilon() * scale && res <= 1e3 * cfg.tol) {
      rep.residuals.push_back(inf_norm(residual(y)));
      rep.iterates.push_back(gather(y));
      rep.rho_star = 1.0 / step.sigma_min;
      rep.converged = true;
      rep.iterations = it + 1;
      break;
    }
  }
  out.slice = std::move(y);
  return out;
}

}  // namespace detail

/// Solves the slice DEL for U^{i+1} with Λ as the Newton Jacobian. Boundary
/// columns of a dirichlet grid are taken from `guess` (or U^i).
template <Density D>
SliceSolve timestep_solve(const D& m, std::span<const double> prev, std::span<const double> curr, const Grid2D& g,
                          const NewtonConfig& cfg = {},
                          std::optional<std::vector<double>> guess = std::nullopt) {
  const int d = m.components();
  detail::check_slice(g, d, prev, "U^{i-1}");
  detail::check_slice(g, d, curr, "U^i");
  std::vector<double> y(curr.size());
  if (guess) {
    detail::check_slice(g, d, *guess, "guess");
    y = *guess;
  } else {
    for (std::size_t k = 0; k < y.size(); ++k) {
      y[k] = cfg.guess == Guess::linear_extrapolation ? 2.0 * curr[k] - prev[k] : curr[k];
    }
    if (!g.periodic()) {
      for (int k = 0; k < d; ++k) {
        y[static_cast<std::size_t>(k)] = curr[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(g.n_x * d + k)] = curr[static_cast<std::size_t>(g.n_x * d + k)];
      }
    }
  }
  return detail::newton_slice(
      g, d, std::move(y), cfg,
      [&](const std::vector<double>& next) { return slice_residual(m, prev, curr, std::span<const double>(next), g); },
      [&](const std::vector<double>& next) { return assemble_lambda(m, curr, std::span<const double>(next), g); },
      "timestep_solve");
}

/// One slice by per-vertex stencil solves, sweeping j upwards and reusing the
/// latest forward values; periodic grids repeat sweeps until the slice
/// residual meets the tolerance.
template <Density D>
SliceSolve stencil_sweep(const D& m, std::span<const double> prev, std::span<const double> curr, const Grid2D& g,
                         const NewtonConfig& cfg = {}) {
  if (m.arity() != 3) throw Error(ErrorKind::capability, "stencil sweeps need a 3-point density");
  const int d = m.components();
  detail::check_slice(g, d, prev, "U^{i-1}");
  detail::check_slice(g, d, curr, "U^i");
  std::vector<double> y(curr.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    y[k] = cfg.guess == Guess::linear_extrapolation ? 2.0 * curr[k] - prev[k] : curr[k];
  }
  if (!g.periodic()) {
    for (int k = 0; k < d; ++k) {
      y[static_cast<std::size_t>(k)] = curr[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(g.n_x * d + k)] = curr[static_cast<std::size_t>(g.n_x * d + k)];
    }
  }
  SliceSolve out;
  const std::vector<int> cols = detail::unknown_columns(g);
  const int sweeps = g.periodic() ? cfg.max_sweeps : 1;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double worst_rho = 0.0;
    int worst_iter = 0;
    for (int j : cols) {
      const std::vector<double> t =
          detail::slice_tuple(g, StencilKind::pts3_7stencil, d, prev, curr, std::span<const double>(y), j);
      StencilSolve s = solve_stencil(m, StencilKind::pts3_7stencil, std::span<const double>(t), d, cfg,
                                     std::vector<double>(t.begin() + d, t.begin() + 2 * d));
      for (int k = 0; k < d; ++k) y[static_cast<std::size_t>(j * d + k)] = s.value[k];
      worst_rho = std::max(worst_rho, s.report.rho_star);
      worst_iter = std::max(worst_iter, s.report.iterations);
    }
    const double res = inf_norm(slice_residual(m, prev, curr, std::span<const double>(y), g));
    out.report.residuals.push_back(res);
    out.report.rho_star = worst_rho;
    out.report.iterations = std::max(out.report.iterations, worst_iter);
    if (res <= cfg.tol || !g.periodic()) {
      out.report.converged = res <= cfg.tol;
      break;
    }
  }
  if (!out.report.converged) {
    throw NonConvergenceError("stencil sweeps did not converge", out.report.residuals);
  }
  out.slice = std::move(y);
  return out;
}

// ---------------------------------------------------------------------------
// First step.

/// Gradients of L_Δx^Δt(X, Y) with respect to X (first) and Y (second) over the unknown columns.
template <Density D>
std::pair<std::vector<double>, std::vector<double>> slice_action_gradients(const D& m, std::span<const double> x,
                                                                           std::span<const double> y,
                                                                           const Grid2D& g) {
  const int d = m.components();
  const int p = m.arity();
  std::vector<double> gx(x.size(), 0.0), gy(y.size(), 0.0);
  for (int j = 0; j < detail::cell_count(g); ++j) {
    const int jn = g.periodic() ? spatial_wrap(g, j + 1) : j + 1;
    const std::vector<double> in = detail::cell_inputs<double>(g, p, d, x, y, j);
    const std::vector<double> grad = input_grad(m, std::span<const double>(in));
    for (int k = 0; k < d; ++k) {
      gx[static_cast<std::size_t>(j * d + k)] += grad[static_cast<std::size_t>(k)];
      gy[static_cast<std::size_t>(j * d + k)] += grad[static_cast<std::size_t>(d + k)];
      gx[static_cast<std::size_t>(jn * d + k)] += grad[static_cast<std::size_t>(2 * d + k)];
      if (p == 4) gy[static_cast<std::size_t>(jn * d + k)] += grad[static_cast<std::size_t>(3 * d + k)];
    }
  }
  std::vector<double> ox, oy;
  for (int c : detail::unknown_columns(g)) {
    for (int k = 0; k < d; ++k) {
      ox.push_back(gx[static_cast<std::size_t>(c * d + k)]);
      oy.push_back(gy[static_cast<std::size_t>(c * d + k)]);
    }
  }
  return {ox, oy};
}

/// U¹ from U⁰ and initial velocities V⁰: solves
///   ∇_V L_Δx(U⁰, V⁰) + Δt ∇_{U⁰} L_Δx^Δt(U⁰, U¹) = 0,
/// with L_Δx(U, V) = L_Δx^Δt(U − Δt/2 V, U + Δt/2 V). Densities declared linear
/// in velocity need no V⁰.
template <Density D>
SliceSolve initialize_first_step(const D& m, std::span<const double> u0, std::optional<std::vector<double>> v0,
                                 const Grid2D& g, const NewtonConfig& cfg = {}) {
  const int d = m.components();
  detail::check_slice(g, d, u0, "U^0");
  if (!v0 && !m.linear_in_velocity()) {
    throw Error(ErrorKind::input, "initial velocities are required for a density that is not linear in velocity");
  }
  std::vector<double> vel = v0 ? *v0 : std::vector<double>(u0.size(), 0.0);
  detail::check_slice(g, d, vel, "V^0");
  const double dt = g.dt;
  std::vector<double> xm(u0.size()), xp(u0.size()), y(u0.size());
  for (std::size_t k = 0; k < u0.size(); ++k) {
    xm[k] = u0[k] - 0.5 * dt * vel[k];
    xp[k] = u0[k] + 0.5 * dt * vel[k];
    y[k] = u0[k] + dt * vel[k];
  }
  const auto [g1, g2] = slice_action_gradients(m, std::span<const double>(xm), std::span<const double>(xp), g);
  std::vector<double> momentum(g1.size());
  for (std::size_t k = 0; k < g1.size(); ++k) momentum[k] = 0.5 * dt * (g2[k] - g1[k]);
  return detail::newton_slice(
      g, d, std::move(y), cfg,
      [&](const std::vector<double>& next) {
        const auto grads = slice_action_gradients(m, u0, std::span<const double>(next), g);
        std::vector<double> r(momentum.size());
        for (std::size_t k = 0; k < r.size(); ++k) r[k] = momentum[k] + dt * grads.first[k];
        return r;
      },
      [&](const std::vector<double>& next) {
        Mat<double> lam = assemble_lambda(m, u0, std::span<const double>(next), g);
        for (int i = 0; i < lam.rows(); ++i)
          for (int j = 0; j < lam.cols(); ++j) lam(i, j) *= dt;
        return lam;
      },
      "initialize_first_step");
}

// ---------------------------------------------------------------------------
// Propagation.

enum class SolveMode { stencil_sweep, timeslice };

struct Propagation {
  Field field;
  std::vector<ConvergenceReport> reports;  // one per solved slice
};

/// Fills slices 2..steps+1 of a field whose slices 0 and 1 are given.
template <Density D>
Propagation propagate(const D& m, std::span<const double> u0, std::span<const double> u1, int steps,
                      const Grid2D& g, const NewtonConfig& cfg = {}, SolveMode mode = SolveMode::timeslice) {
  if (steps < 0) throw Error(ErrorKind::input, "steps must be >= 0");
  const int d = m.components();
  Grid2D out_grid = g;
  out_grid.n_t = steps + 1;
  Propagation out{Field(out_grid, d), {}};
  detail::check_slice(g, d, u0, "U^0");
  detail::check_slice(g, d, u1, "U^1");
  std::copy(u0.begin(), u0.end(), out.field.slice(0).begin());
  std::copy(u1.begin(), u1.end(), out.field.slice(1).begin());
  for (int i = 1; i <= steps; ++i) {
    try {
      SliceSolve s = mode == SolveMode::timeslice
                         ? timestep_solve(m, out.field.slice(i - 1), out.field.slice(i), g, cfg)
                         : stencil_sweep(m, out.field.slice(i - 1), out.field.slice(i), g, cfg);
      for (double v : s.slice)
        if (!std::isfinite(v)) throw Error(ErrorKind::non_finite, "propagated slice is not finite");
      std::copy(s.slice.begin(), s.slice.end(), out.field.slice(i + 1).begin());
      out.reports.push_back(std::move(s.report));
    } catch (const ConditioningError& e) {
      throw ConditioningError(std::string(e.what()) + " at time index " + std::to_string(i + 1), e.sigma_min());
    } catch (const NonConvergenceError& e) {
      throw NonConvergenceError(std::string(e.what()) + " at time index " + std::to_string(i + 1), e.residuals());
    }
  }
  return out;
}

/// Full trajectory from U⁰ (and V⁰): first step, then `steps - 1` DEL solves.
template <Density D>
Propagation propagate_from_initial(const D& m, std::span<const double> u0, std::optional<std::vector<double>> v0,
                                   int steps, const Grid2D& g, const NewtonConfig& cfg = {},
                                   SolveMode mode = SolveMode::timeslice) {
  if (steps < 1) throw Error(ErrorKind::input, "steps must be >= 1");
  SliceSolve first = initialize_first_step(m, u0, std::move(v0), g, cfg);
  Propagation p = propagate(m, u0, std::span<const double>(first.slice), steps - 1, g, cfg, mode);
  p.reports.insert(p.reports.begin(), std::move(first.report));
  return p;
}

// ---------------------------------------------------------------------------
// Convergence-rate monitoring.

struct RateVerdict {
  enum class Status { quadratic, not_quadratic, inconclusive };
  Status status = Status::inconclusive;
  double constant = 0.0;  // max e_{n+1} / e_n² over usable pairs
  double order = 0.0;     // median of the last observed orders
  int usable = 0;         // errors above round-off

  bool passed() const { return status == Status::quadratic; }
};

inline const char* to_string(RateVerdict::Status s) {
  switch (s) {
    case RateVerdict::Status::quadratic: return "quadratic";
    case RateVerdict::Status::not_quadratic: return "not_quadratic";
    case RateVerdict::Status::inconclusive: return "inconclusive";
  }
  return "?";
}

/// Fits e_{n+1} <= C e_n² with errors measured against the final iterate.
inline RateVerdict verify_quadratic_rate(const ConvergenceReport& rep) {
  RateVerdict v;
  if (rep.iterates.size() < 2) return v;
  const std::vector<double>& xs = rep.iterates.back();
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, inf_norm(xs));
  std::vector<double> e;
  for (std::size_t n = 0; n + 1 < rep.iterates.size(); ++n) {
    double err = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) err = std::max(err, std::abs(rep.iterates[n][k] - xs[k]));
    if (err <= floor) break;
    e.push_back(err);
  }
  v.usable = static_cast<int>(e.size());
  if (e.size() < 3) return v;
  std::vector<double> orders;
  for (std::size_t n = 0; n + 1 < e.size(); ++n) v.constant = std::max(v.constant, e[n + 1] / (e[n] * e[n]));
  for (std::size_t n = 1; n + 1 < e.size(); ++n) {
    const double num = std::log(e[n + 1] / e[n]);
    const double den = std::log(e[n] / e[n - 1]);
    if (den < 0.0) orders.push_back(num / den);
  }
  if (orders.empty()) {
    v.status = RateVerdict::Status::not_quadratic;
    return v;
  }
  // the asymptotic phase decides; early damped iterates only approach the basin
  if (orders.size() > 3) orders.erase(orders.begin(), orders.end() - 3);
  std::sort(orders.begin(), orders.end());
  v.order = orders[orders.size() / 2];
  v.status = v.order >= 1.6 ? RateVerdict::Status::quadratic : RateVerdict::Status::not_quadratic;
  return v;
}

/// Newton iterates and residuals for a scalar equation, for rate checks on toy problems.
template <class F, class DF>
ConvergenceReport newton_scalar(F&& f, DF&& df, double x0, const NewtonConfig& cfg = {}) {
  ConvergenceReport rep;
  double x = x0;
  for (int it = 0;; ++it) {
    const double r = f(x);
    rep.residuals.push_back(std::abs(r));
    rep.iterates.push_back({x});
    if (std::abs(r) <= cfg.tol) {
      rep.converged = true;
      rep.iterations = it;
      rep.rho_star = 1.0 / std::abs(df(x));
      break;
    }
    if (it >= cfg.max_iter) throw NonConvergenceError("scalar Newton did not converge", rep.residuals);
    const double j = df(x);
    if (j == 0.0) throw ConditioningError("scalar Newton derivative vanished", 0.0);
    const double nx = x - r / j;
    if (std::abs(nx - x) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      x = nx;
      rep.iterates.push_back({x});
      rep.residuals.push_back(std::abs(f(x)));
      rep.converged = true;
      rep.iterations = it + 1;
      break;
    }
    x = nx;
  }
  return rep;
}

}  // namespace lagfield

#endif  // LAGFIELD_SOLVER_HPP
