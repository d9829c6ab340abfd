#ifndef LAGFIELD_ROM_HPP
#define LAGFIELD_ROM_HPP

// Reduced-order baseline: PCA of spatial slices and a 2-point latent
// Lagrangian L^Q(q^i, q^{i+1}) learned on the projected chains.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/solver.hpp"
#include "lagfield/training.hpp"
#include "lagfield/tw_locator.hpp"

namespace lagfield {

struct PcaMap {
  Eigen::MatrixXd basis;   // M × M_red, orthonormal columns
  Eigen::VectorXd mean;    // zero unless fitted with centering
  Eigen::VectorXd singular_values;
  int rank = 0;            // numerical rank of the snapshot matrix
  bool padded = false;     // basis extended beyond the rank

  int dim() const { return static_cast<int>(basis.rows()); }
  int reduced() const { return static_cast<int>(basis.cols()); }

  std::vector<double> project(std::span<const double> u) const {
    if (static_cast<int>(u.size()) != dim()) throw Error(ErrorKind::shape, "slice length does not match the basis");
    const Eigen::VectorXd q =
        basis.transpose() * (Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size())) - mean);
    return {q.data(), q.data() + q.size()};
  }
  std::vector<double> lift(std::span<const double> q) const {
    if (static_cast<int>(q.size()) != reduced()) throw Error(ErrorKind::shape, "latent length does not match the basis");
    const Eigen::VectorXd u =
        basis * Eigen::Map<const Eigen::VectorXd>(q.data(), static_cast<Eigen::Index>(q.size())) + mean;
    return {u.data(), u.data() + u.size()};
  }
};

/// Columns are the spatial slices of every field, in trajectory then time order.
inline Eigen::MatrixXd snapshot_matrix(const std::vector<Field>& fields) {
  if (fields.empty()) throw Error(ErrorKind::input, "snapshot matrix needs at least one field");
  const int m = fields.front().slice_size();
  Eigen::Index cols = 0;
  for (const Field& f : fields) {
    if (f.slice_size() != m) throw Error(ErrorKind::shape, "fields have different slice sizes");
    cols += f.times();
  }
  Eigen::MatrixXd s(m, cols);
  Eigen::Index c = 0;
  for (const Field& f : fields)
    for (int i = 0; i < f.times(); ++i, ++c) {
      const auto sl = f.slice(i);
      for (int k = 0; k < m; ++k) s(k, c) = sl[k];
    }
  return s;
}

/// Leading left singular vectors, each signed so its largest entry is positive.
inline PcaMap fit_pca(const Eigen::MatrixXd& snapshots, int m_red, bool center = false) {
  const int m = static_cast<int>(snapshots.rows());
  if (m_red < 1 || m_red > m) {
    throw Error(ErrorKind::sizing, "reduced dimension must lie in [1, " + std::to_string(m) + "]");
  }
  if (snapshots.cols() == 0) throw Error(ErrorKind::input, "no snapshots");
  PcaMap map;
  map.mean = center ? Eigen::VectorXd(snapshots.rowwise().mean()) : Eigen::VectorXd::Zero(m);
  const Eigen::MatrixXd x = snapshots.colwise() - map.mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeFullU);
  map.singular_values = svd.singularValues();
  const double smax = map.singular_values.size() ? map.singular_values(0) : 0.0;
  const double tol = std::max<double>(m, static_cast<double>(x.cols())) * std::numeric_limits<double>::epsilon() * smax;
  for (Eigen::Index k = 0; k < map.singular_values.size(); ++k)
    if (map.singular_values(k) > tol) ++map.rank;
  map.padded = map.rank < m_red;
  map.basis = svd.matrixU().leftCols(m_red);
  for (int k = 0; k < m_red; ++k) {
    Eigen::Index at;
    map.basis.col(k).cwiseAbs().maxCoeff(&at);
    if (map.basis(at, k) < 0.0) map.basis.col(k) *= -1.0;
  }
  return map;
}

struct ReconstructionError {
  double mean = 0.0;  // mean of ‖u − R(pr(u))‖ / ‖u‖ over non-zero columns
  int skipped = 0;    // zero columns
};

inline ReconstructionError reconstruction_error(const PcaMap& map, const Eigen::MatrixXd& snapshots) {
  if (snapshots.rows() != map.dim()) throw Error(ErrorKind::shape, "snapshot rows do not match the basis");
  ReconstructionError out;
  int used = 0;
  for (Eigen::Index c = 0; c < snapshots.cols(); ++c) {
    const Eigen::VectorXd u = snapshots.col(c);
    const double n = u.norm();
    if (n == 0.0) {
      ++out.skipped;
      continue;
    }
    const Eigen::VectorXd r = map.basis * (map.basis.transpose() * (u - map.mean)) + map.mean;
    out.mean += (u - r).norm() / n;
    ++used;
  }
  if (used > 0) out.mean /= used;
  return out;
}

/// Latent chain q^i = pr(U^i) of a field.
inline std::vector<std::vector<double>> project_field(const PcaMap& map, const Field& f) {
  std::vector<std::vector<double>> q;
  for (int i = 0; i < f.times(); ++i) q.push_back(map.project(f.slice(i)));
  return q;
}

inline Field lift_chain(const PcaMap& map, const std::vector<std::vector<double>>& q, const Grid2D& g, int d) {
  Grid2D out = g;
  out.n_t = static_cast<int>(q.size()) - 1;
  Field f(out, d);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto u = map.lift(q[i]);
    auto sl = f.slice(static_cast<int>(i));
    std::copy(u.begin(), u.end(), sl.begin());
  }
  return f;
}

/// ∂/∂q^i (L^Q(q^{i−1}, q^i) + L^Q(q^i, q^{i+1})) on a triple.
template <Density D>
std::vector<double> latent_del_residual(const D& m, const StencilTuple& triple) {
  if (triple.kind != StencilKind::pts2_3stencil) throw Error(ErrorKind::shape, "latent residual needs a chain triple");
  return del_residual(m, triple);
}

/// Dataset of projected chain triples (no slices or blocks).
inline Dataset latent_dataset(const PcaMap& map, const std::vector<Field>& fields) {
  if (fields.empty()) throw Error(ErrorKind::input, "latent dataset needs at least one field");
  Dataset ds;
  ds.kind = StencilKind::pts2_3stencil;
  ds.grid = fields.front().grid();
  for (std::size_t t = 0; t < fields.size(); ++t) {
    auto ts = chain_stencils(project_field(map, fields[t]), static_cast<int>(t));
    ds.tuples.insert(ds.tuples.end(), std::make_move_iterator(ts.begin()), std::make_move_iterator(ts.end()));
  }
  return ds;
}

inline LossConfig latent_loss_config() {
  LossConfig c;
  c.reg = RegKind::stencil_inverse;
  c.weight = 1e-8;
  c.sv_iters = 3;
  return c;
}

template <class D>
TrainRun train_latent(D& model, const Dataset& ds, const AdamConfig& ac, std::uint64_t seed,
                      const LossConfig& lc = latent_loss_config(), const TrainHooks& hooks = {}) {
  if (ds.kind != StencilKind::pts2_3stencil || model.arity() != 2) {
    throw Error(ErrorKind::shape, "latent training needs a 2-point density and chain triples");
  }
  return train(model, ds, lc, ac, seed, hooks);
}

struct LatentPropagation {
  std::vector<std::vector<double>> q;
  std::vector<ConvergenceReport> reports;
};

/// Newton on the chain DEL for q^{i+1}, i = 1..steps−1; q has steps+1 states.
template <Density D>
LatentPropagation propagate_latent(const D& m, std::span<const double> q0, std::span<const double> q1, int steps,
                                   const NewtonConfig& cfg = {}) {
  const int n = m.components();
  if (static_cast<int>(q0.size()) != n || static_cast<int>(q1.size()) != n) {
    throw Error(ErrorKind::shape, "latent state length does not match the density");
  }
  if (steps < 1) throw Error(ErrorKind::input, "latent propagation needs steps >= 1");
  LatentPropagation out;
  out.q.emplace_back(q0.begin(), q0.end());
  out.q.emplace_back(q1.begin(), q1.end());
  for (int i = 1; i < steps; ++i) {
    std::vector<double> t;
    t.insert(t.end(), out.q[i - 1].begin(), out.q[i - 1].end());
    t.insert(t.end(), out.q[i].begin(), out.q[i].end());
    for (int k = 0; k < n; ++k) t.push_back(2.0 * out.q[i][k] - out.q[i - 1][k]);
    if (cfg.guess == Guess::previous_step)
      for (int k = 0; k < n; ++k) t[static_cast<std::size_t>(2 * n + k)] = out.q[i][k];
    try {
      StencilSolve s = solve_stencil(m, StencilKind::pts2_3stencil, t, n, cfg, std::vector<double>(t.begin() + 2 * n, t.end()));
      out.q.push_back(std::move(s.value));
      out.reports.push_back(std::move(s.report));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " at latent step " + std::to_string(i + 1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Comparison tasks: propagate from the first two slices of a reference field.

/// Lifted latent propagation from pr(U^0), pr(U^1) over the horizon of `truth`.
template <Density D>
Field rom_prediction(const D& latent, const PcaMap& map, const Field& truth, const NewtonConfig& cfg = {}) {
  const auto q0 = map.project(truth.slice(0));
  const auto q1 = map.project(truth.slice(1));
  const LatentPropagation lp = propagate_latent(latent, q0, q1, truth.times() - 1, cfg);
  return lift_chain(map, lp.q, truth.grid(), truth.d());
}

template <Density D>
Field stencil_prediction(const D& m, const Field& truth, const NewtonConfig& cfg = {},
                         SolveMode mode = SolveMode::timeslice) {
  return propagate(m, truth.slice(0), truth.slice(1), truth.times() - 2, truth.grid(), cfg, mode).field;
}

/// U^0 = U^1 = sin(2πk x / b) on a periodic scalar grid.
inline std::vector<double> sine_slice(const Grid2D& g, int k) {
  std::vector<double> u(static_cast<std::size_t>(g.columns()));
  for (int j = 0; j < g.columns(); ++j) u[j] = std::sin(2.0 * std::numbers::pi * k * j * g.dx / g.length());
  return u;
}

// ---------------------------------------------------------------------------
// Latent travelling waves

/// Σ_i ‖chain DEL‖² over a latent chain, with the gradient w.r.t. every state.
template <Density D>
FieldObjective chain_objective(const D& m, const std::vector<std::vector<double>>& q, bool want_grad) {
  const int n = m.components();
  if (q.size() < 3) throw Error(ErrorKind::sizing, "a chain needs at least three states");
  FieldObjective out;
  if (want_grad) out.grad.assign(q.size() * static_cast<std::size_t>(n), 0.0);
  std::vector<double> x(static_cast<std::size_t>(2 * n)), g, res(static_cast<std::size_t>(n));
  Mat<double> h_prev, h_next;
  std::vector<double> g_prev, g_next;
  for (std::size_t i = 1; i + 1 < q.size(); ++i) {
    for (int k = 0; k < n; ++k) {
      x[k] = q[i - 1][k];
      x[n + k] = q[i][k];
    }
    input_derivatives(m, x, g_prev, h_prev);
    for (int k = 0; k < n; ++k) {
      x[k] = q[i][k];
      x[n + k] = q[i + 1][k];
    }
    input_derivatives(m, x, g_next, h_next);
    for (int k = 0; k < n; ++k) {
      res[k] = g_prev[n + k] + g_next[k];
      out.value += res[k] * res[k];
      out.max_residual = std::max(out.max_residual, std::abs(res[k]));
      out.residuals.push_back(res[k]);
    }
    if (!want_grad) continue;
    // residual row k: ∂/∂q^i_k; columns are q^{i−1}, q^i, q^{i+1}
    for (int k = 0; k < n; ++k) {
      const double w = 2.0 * res[k];
      for (int c = 0; c < n; ++c) {
        out.grad[(i - 1) * n + c] += w * h_prev(n + k, c);
        out.grad[i * n + c] += w * (h_prev(n + k, n + c) + h_next(k, c));
        out.grad[(i + 1) * n + c] += w * h_next(k, n + c);
      }
    }
  }
  return out;
}

/// RMS of ‖∂DEL/∂q^{i+1}‖_F / √n along a latent chain.
template <Density D>
double forward_stiffness_chain(const D& m, const std::vector<std::vector<double>>& q) {
  const auto tuples = chain_stencils(q);
  double s = 0.0;
  for (const StencilTuple& t : tuples) {
    const Mat<double> j = del_forward_jacobian<double, double>(m, m.parameters(), t.kind, std::span<const double>(t.values), t.dim);
    for (double v : j.data()) s += v * v / t.dim;
  }
  return std::sqrt(s / static_cast<double>(tuples.size()));
}

/// Latent travelling-wave objective: the TW lattice fill projected slice-wise.
template <Density D>
TwObjective latent_tw_objective(const D& m, const PcaMap& map, const WaveProfile& p, const Grid2D& g) {
  if (m.components() != map.reduced()) throw Error(ErrorKind::shape, "latent density does not match the basis");
  const Field f = fill_tw(p, g);
  if (f.slice_size() != map.dim()) throw Error(ErrorKind::shape, "profile lattice does not match the basis");
  const auto q = project_field(map, f);
  FieldObjective co = chain_objective(m, q, true);
  const int n = map.reduced();
  std::vector<double> grad_u(f.values().size());
  for (int i = 0; i < f.times(); ++i) {
    const Eigen::VectorXd gu =
        map.basis * Eigen::Map<const Eigen::VectorXd>(co.grad.data() + static_cast<std::ptrdiff_t>(i * n), n);
    std::copy(gu.data(), gu.data() + gu.size(), grad_u.begin() + static_cast<std::ptrdiff_t>(i * f.slice_size()));
  }
  TwObjective out;
  out.wave = co.value;
  out.max_residual = co.max_residual;
  out.grad_wave = profile_pullback(p, g, grad_u);
  unit_term(p, g.dx, out);
  return out;
}

template <Density D>
TwSearch locate_tw_latent(const D& m, const PcaMap& map, const WaveProfile& init, const Grid2D& g,
                          const TwSearchConfig& cfg = {}) {
  const double s = forward_stiffness_chain(m, project_field(map, fill_tw(init, g)));
  const TwSearchConfig c = cfg.auto_weight ? with_weight(cfg, s) : cfg;
  auto objective = [&](const WaveProfile& p) { return latent_tw_objective(m, map, p, g); };
  TwSearch out = adam_profile_search(init, c, g.dx, objective);
  if (c.polish_iters > 0) {
    const double scale = s > 0.0 && std::isfinite(s) ? s : 1.0;
    out.polish_iterations = lm_polish(out.profile, c.polish_iters, [&](const WaveProfile& p) {
      auto r = chain_objective(m, project_field(map, fill_tw(p, g)), false).residuals;
      for (double& v : r) v /= scale;
      r.push_back(profile_norm2(p, g.dx) - 1.0);
      return r;
    });
    const TwObjective o = objective(out.profile);
    out.loss_wave = o.wave;
    out.loss_unit = o.unit;
    out.max_residual = o.max_residual;
    out.objective = c.wave_weight * o.wave + o.unit;
  }
  return out;
}

template <Density D>
TwSearch find_tw_latent(const D& m, const PcaMap& map, const WaveProfile& base, double sigma, std::uint64_t seed,
                        const Grid2D& g, const TwSearchConfig& cfg = {}) {
  return multistart(base, sigma, seed, cfg.restarts,
                    [&](const WaveProfile& init) { return locate_tw_latent(m, map, init, g, cfg); });
}

}  // namespace lagfield

#endif  // LAGFIELD_ROM_HPP
