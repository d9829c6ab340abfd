#ifndef LAGFIELD_TRAINING_HPP
#define LAGFIELD_TRAINING_HPP

// Losses, regularizers, batching and Adam for fitting densities to lattice data.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/linalg.hpp"
#include "lagfield/seed.hpp"
#include "lagfield/solver.hpp"

namespace lagfield {

enum class RegKind { none, stencil_inverse, slice_inverse, slice_tamed };

inline const char* to_string(RegKind k) {
  switch (k) {
    case RegKind::none: return "none";
    case RegKind::stencil_inverse: return "stencil_inverse";
    case RegKind::slice_inverse: return "slice_inverse";
    case RegKind::slice_tamed: return "slice_tamed";
  }
  return "?";
}

inline RegKind reg_kind_from_string(const std::string& s) {
  if (s == "none") return RegKind::none;
  if (s == "stencil_inverse") return RegKind::stencil_inverse;
  if (s == "slice_inverse") return RegKind::slice_inverse;
  if (s == "slice_tamed") return RegKind::slice_tamed;
  throw Error(ErrorKind::input, "unknown regularizer '" + s + "'");
}

struct LossConfig {
  RegKind reg = RegKind::stencil_inverse;
  double weight = 1.0;
  int sv_iters = 3;
  double taming = 10.0;
  double sigma_floor = 1e-8;

  void validate() const {
    if (!(weight >= 0.0)) throw Error(ErrorKind::input, "loss weight must be >= 0");
    if (sv_iters < 1) throw Error(ErrorKind::input, "sv_iters must be >= 1");
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 10;
  int epochs = 1;
  bool block_batches = false;  // batches of whole time rows (blocks)
  int blocks_per_batch = 2;

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw Error(ErrorKind::input, "adam betas must lie in (0, 1)");
    }
    if (batch_size < 1 || blocks_per_batch < 1) throw Error(ErrorKind::input, "batch size must be >= 1");
    if (epochs < 0) throw Error(ErrorKind::input, "epochs must be >= 0");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Bias-corrected Adam update in place.
inline void adam_step(std::vector<double>& theta, std::span<const double> grad, AdamState& s, const AdamConfig& c,
                      double lr_override = -1.0) {
  if (grad.size() != theta.size()) throw Error(ErrorKind::shape, "adam gradient length mismatch");
  if (s.m.size() != theta.size()) {
    s.m.assign(theta.size(), 0.0);
    s.v.assign(theta.size(), 0.0);
  }
  ++s.step;
  const double lr = lr_override > 0.0 ? lr_override : c.lr;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < theta.size(); ++k) {
    s.m[k] = c.beta1 * s.m[k] + (1.0 - c.beta1) * grad[k];
    s.v[k] = c.beta2 * s.v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
    const double mh = s.m[k] / bc1;
    const double vh = s.v[k] / bc2;
    theta[k] -= lr * mh / (std::sqrt(vh) + c.eps);
  }
}

// ---------------------------------------------------------------------------
// Datasets

struct SlicePair {
  std::vector<double> u_i;
  std::vector<double> u_next;
  int trajectory = 0;
  int i = 0;
};

/// All tuples centred on one time row of one trajectory, plus the slice pair
/// (U^i, U^{i+1}) of that row.
struct Block {
  std::vector<int> tuples;
  int slice_pair = -1;
};

struct Dataset {
  StencilKind kind = StencilKind::pts3_7stencil;
  Grid2D grid;
  int stride = 1;
  std::vector<StencilTuple> tuples;
  std::vector<SlicePair> slices;
  std::vector<Block> blocks;
};

inline Dataset make_dataset(const std::vector<Field>& fields, StencilKind kind, int stride = 1) {
  if (fields.empty()) throw Error(ErrorKind::input, "dataset needs at least one field");
  Dataset ds;
  ds.kind = kind;
  ds.grid = fields.front().grid();
  ds.stride = stride;
  for (std::size_t t = 0; t < fields.size(); ++t) {
    const Field& f = fields[t];
    if (!(f.grid() == ds.grid) || f.d() != fields.front().d()) {
      throw Error(ErrorKind::input, "dataset fields must share grid and components");
    }
    std::vector<StencilTuple> ts = extract_stencils(f, kind, stride, static_cast<int>(t));
    if (stride == 1 && kind != StencilKind::pts2_3stencil) {
      const VertexRange r = interior_vertices(f.grid(), kind, stride);
      for (int i = r.i_begin; i <= r.i_end; ++i) {
        Block b;
        b.slice_pair = static_cast<int>(ds.slices.size());
        ds.slices.push_back({std::vector<double>(f.slice(i).begin(), f.slice(i).end()),
                             std::vector<double>(f.slice(i + 1).begin(), f.slice(i + 1).end()), static_cast<int>(t),
                             i});
        for (std::size_t k = 0; k < ts.size(); ++k) {
          if (ts[k].i == i) b.tuples.push_back(static_cast<int>(ds.tuples.size() + k));
        }
        ds.blocks.push_back(std::move(b));
      }
    }
    ds.tuples.insert(ds.tuples.end(), std::make_move_iterator(ts.begin()), std::make_move_iterator(ts.end()));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Losses, generic in the parameter scalar.

/// Σ |DEL|² over the tuples.
template <class P, Density D>
P loss_data(const D& m, std::span<const P> theta, const std::vector<const StencilTuple*>& batch) {
  P total(0.0);
  for (const StencilTuple* t : batch) {
    const std::vector<P> r = del_residual<P, double>(m, theta, t->kind, std::span<const double>(t->values), t->dim);
    for (const P& x : r) total = total + x * x;
  }
  return total;
}

template <class T>
T floored_inverse_square(const T& sigma, double floor) {
  if (!(primal(sigma) >= floor)) return T(1.0 / (floor * floor));
  return T(1.0) / (sigma * sigma);
}

/// Mean over tuples of ‖(∂²L_d/∂u^i ∂u^{i+1})⁻¹‖², spectral norm, σ floored.
template <class P, Density D>
P loss_reg_stencil(const D& m, std::span<const P> theta, const std::vector<const StencilTuple*>& batch,
                   const LossConfig& cfg = {}) {
  if (batch.empty()) return P(0.0);
  P total(0.0);
  for (const StencilTuple* t : batch) {
    const Mat<P> h = del_forward_jacobian<P, double>(m, theta, t->kind, std::span<const double>(t->values), t->dim);
    if (h.rows() == 1) {
      const P& v = h(0, 0);
      total = total + (std::abs(primal(v)) >= cfg.sigma_floor ? P(1.0) / (v * v)
                                                               : P(1.0 / (cfg.sigma_floor * cfg.sigma_floor)));
    } else {
      SigmaMin st;
      const P s = smallest_singular_value(h, cfg.sv_iters, &st);
      total = total + (st.ok ? floored_inverse_square(s, cfg.sigma_floor)
                             : P(1.0 / (cfg.sigma_floor * cfg.sigma_floor)));
    }
  }
  return total / static_cast<double>(batch.size());
}

/// Summand of the slice regularizer for one Λ.
template <class T>
T slice_summand(const Mat<T>& lam, bool tamed, const LossConfig& cfg) {
  SigmaMin st;
  const T s = smallest_singular_value(lam, cfg.sv_iters, &st);
  if (tamed) {
    if (!st.ok) return T(1.0);
    return relu(T(1.0) - cfg.taming * (s * s));
  }
  if (!st.ok) return T(1.0 / (cfg.sigma_floor * cfg.sigma_floor));
  return floored_inverse_square(s, cfg.sigma_floor);
}

/// Mean over slice pairs of ‖Λ⁻¹‖² (untamed) or relu(1 − τσ_min²) (tamed).
template <class P, Density D>
P loss_reg_slice(const D& m, std::span<const P> theta, const std::vector<const SlicePair*>& pairs, const Grid2D& g,
                 bool tamed, const LossConfig& cfg = {}) {
  if (pairs.empty()) return P(0.0);
  P total(0.0);
  for (const SlicePair* sp : pairs) {
    const Mat<P> lam = assemble_lambda<P, double>(m, theta, std::span<const double>(sp->u_i),
                                                  std::span<const double>(sp->u_next), g);
    total = total + slice_summand(lam, tamed, cfg);
  }
  return total / static_cast<double>(pairs.size());
}

template <class P, Density D>
P loss_reg(const D& m, std::span<const P> theta, const std::vector<const StencilTuple*>& tuples,
           const std::vector<const SlicePair*>& pairs, const Grid2D& g, const LossConfig& cfg) {
  switch (cfg.reg) {
    case RegKind::none: return P(0.0);
    case RegKind::stencil_inverse: return loss_reg_stencil<P>(m, theta, tuples, cfg);
    case RegKind::slice_inverse: return loss_reg_slice<P>(m, theta, pairs, g, false, cfg);
    case RegKind::slice_tamed: return loss_reg_slice<P>(m, theta, pairs, g, true, cfg);
  }
  return P(0.0);
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  int epoch = 0;
  double l_data = 0.0;
  double l_reg = 0.0;
  double wall = 0.0;  // seconds since the start of training
};

struct TrainRun {
  std::vector<double> params;
  AdamState adam;
  EpochRecord initial;               // losses before the first epoch
  std::vector<EpochRecord> history;  // one entry per completed epoch
  std::uint64_t seed = 0;
};

inline std::vector<const StencilTuple*> all_tuples(const Dataset& ds) {
  std::vector<const StencilTuple*> v;
  for (const StencilTuple& t : ds.tuples) v.push_back(&t);
  return v;
}

inline std::vector<const SlicePair*> all_slices(const Dataset& ds) {
  std::vector<const SlicePair*> v;
  for (const SlicePair& s : ds.slices) v.push_back(&s);
  return v;
}

inline bool uses_slices(RegKind k) { return k == RegKind::slice_inverse || k == RegKind::slice_tamed; }

/// Full-dataset losses at θ.
template <Density D>
EpochRecord evaluate_losses(const D& m, std::span<const double> theta, const Dataset& ds, const LossConfig& cfg) {
  EpochRecord r;
  r.l_data = loss_data<double>(m, theta, all_tuples(ds));
  r.l_reg = loss_reg<double>(m, theta, all_tuples(ds), all_slices(ds), ds.grid, cfg);
  return r;
}

struct Batch {
  std::vector<const StencilTuple*> tuples;
  std::vector<const SlicePair*> slices;
};

inline std::vector<Batch> make_batches(const Dataset& ds, const AdamConfig& ac, bool blocks, std::uint64_t seed,
                                       int epoch) {
  std::mt19937_64 rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
  std::vector<Batch> out;
  if (blocks) {
    std::vector<int> order(ds.blocks.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); k += static_cast<std::size_t>(ac.blocks_per_batch)) {
      Batch b;
      for (std::size_t q = k; q < std::min(order.size(), k + static_cast<std::size_t>(ac.blocks_per_batch)); ++q) {
        const Block& bl = ds.blocks[static_cast<std::size_t>(order[q])];
        for (int t : bl.tuples) b.tuples.push_back(&ds.tuples[static_cast<std::size_t>(t)]);
        b.slices.push_back(&ds.slices[static_cast<std::size_t>(bl.slice_pair)]);
      }
      out.push_back(std::move(b));
    }
  } else {
    std::vector<int> order(ds.tuples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); k += static_cast<std::size_t>(ac.batch_size)) {
      Batch b;
      for (std::size_t q = k; q < std::min(order.size(), k + static_cast<std::size_t>(ac.batch_size)); ++q) {
        b.tuples.push_back(&ds.tuples[static_cast<std::size_t>(order[q])]);
      }
      out.push_back(std::move(b));
    }
  }
  return out;
}

/// Value and θ-gradient of ℓ_data + w ℓ_reg on one batch.
template <Density D>
std::pair<double, std::vector<double>> batch_loss_gradient(const D& m, std::span<const double> theta, const Batch& b,
                                                           const Grid2D& g, const LossConfig& cfg) {
  return value_and_gradient(theta, [&](std::span<const Var> th) {
    Var l = loss_data<Var>(m, th, b.tuples);
    if (cfg.reg != RegKind::none && cfg.weight > 0.0) l = l + cfg.weight * loss_reg<Var>(m, th, b.tuples, b.slices, g, cfg);
    return l;
  });
}

struct TrainHooks {
  // called after each epoch; returning false stops training early
  std::function<bool(const EpochRecord&)> on_epoch;
};

/// Adam over seeded shuffles of the dataset. The model's parameters are updated
/// in place; on a non-finite loss or gradient they are reset to the last
/// finite values and NonFiniteError is thrown.
template <class D>
TrainRun train(D& model, const Dataset& ds, const LossConfig& lc, const AdamConfig& ac, std::uint64_t seed,
               const TrainHooks& hooks = {}) {
  lc.validate();
  ac.validate();
  if (ds.tuples.empty()) throw Error(ErrorKind::input, "training needs a non-empty dataset");
  const bool blocks = ac.block_batches || uses_slices(lc.reg);
  if (blocks && ds.blocks.empty()) {
    throw Error(ErrorKind::capability, "slice regularizers and block batches need a stride-1 dataset with slices");
  }
  TrainRun run;
  run.seed = seed;
  run.params.assign(model.parameters().begin(), model.parameters().end());
  const auto t0 = std::chrono::steady_clock::now();
  run.initial = evaluate_losses(model, run.params, ds, lc);
  for (int epoch = 1; epoch <= ac.epochs; ++epoch) {
    const std::vector<Batch> batches = make_batches(ds, ac, blocks, seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      auto [value, grad] = batch_loss_gradient(model, run.params, batches[bi], ds.grid, lc);
      bool finite = std::isfinite(value);
      for (double g : grad) finite = finite && std::isfinite(g);
      if (!finite) {
        model.set_parameters(run.params);
        throw NonFiniteError("non-finite loss or gradient at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(bi),
                             epoch, static_cast<int>(bi), run.params);
      }
      std::vector<double> next = run.params;
      adam_step(next, grad, run.adam, ac);
      run.params = std::move(next);
    }
    model.set_parameters(run.params);
    EpochRecord rec = evaluate_losses(model, run.params, ds, lc);
    rec.epoch = epoch;
    rec.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(rec.l_data) || !std::isfinite(rec.l_reg)) {
      throw NonFiniteError("non-finite full-dataset loss at epoch " + std::to_string(epoch), epoch, -1, run.params);
    }
    run.history.push_back(rec);
    if (hooks.on_epoch && !hooks.on_epoch(rec)) break;
  }
  model.set_parameters(run.params);
  return run;
}

}  // namespace lagfield

#endif  // LAGFIELD_TRAINING_HPP
