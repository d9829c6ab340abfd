#ifndef LAGFIELD_CONFIG_HPP
#define LAGFIELD_CONFIG_HPP

// Experiment configuration read from JSON. Missing keys keep their defaults;
// unknown keys are rejected so typos surface early.

#include <cstdint>
#include <set>
#include <string>

#include <json.hpp>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/solver.hpp"
#include "lagfield/training.hpp"
#include "lagfield/tw_locator.hpp"

namespace lagfield {

struct TwConfig {
  int m = 1;
  double sigma = 0.5;
  TwSearchConfig search = TwSearchConfig::robust();
};

struct RomConfig {
  int m_red = 2;
  bool center = false;
  int epochs = 2000;
  double lr = 1e-3;
  int batch_size = 10;
};

struct ExperimentConfig {
  std::string theory = "wave";
  Grid2D grid{20, 20, 0.025, 0.05, BoundaryCondition::periodic};
  int k = 10;
  std::uint64_t seed = 0;
  MlpSpec mlp = MlpSpec::wave();
  LossConfig loss;
  AdamConfig adam;
  NewtonConfig newton;
  int stride = 1;
  SolveMode mode = SolveMode::timeslice;
  TwConfig tw;
  RomConfig rom;
  std::string out = "out";

  void validate() const {
    if (theory != "wave" && theory != "schrodinger") throw Error(ErrorKind::input, "theory must be wave or schrodinger");
    grid.validate();
    if (k < 1) throw Error(ErrorKind::input, "K must be >= 1");
    mlp.validate();
    loss.validate();
    adam.validate();
    newton.validate();
    if (stride < 1) throw Error(ErrorKind::input, "stride must be >= 1");
    if (rom.m_red < 1) throw Error(ErrorKind::input, "m_red must be >= 1");
    if (tw.search.steps < 0 || tw.search.restarts < 1 || tw.search.polish_iters < 0) {
      throw Error(ErrorKind::input, "tw steps and polish_iters must be >= 0, restarts >= 1");
    }
    if (!(tw.sigma >= 0.0)) throw Error(ErrorKind::input, "tw sigma must be >= 0");
  }
};

inline SolveMode solve_mode_from_string(const std::string& s) {
  if (s == "stencil") return SolveMode::stencil_sweep;
  if (s == "timeslice") return SolveMode::timeslice;
  throw Error(ErrorKind::input, "mode must be stencil or timeslice, got '" + s + "'");
}

inline const char* to_string(SolveMode m) { return m == SolveMode::stencil_sweep ? "stencil" : "timeslice"; }

namespace detail {

using json = nlohmann::json;

inline void only_keys(const json& j, const char* where, std::set<std::string> allowed) {
  if (!j.is_object()) throw Error(ErrorKind::input, std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw Error(ErrorKind::input, "unknown key '" + key + "' in " + where);
}

template <class T>
void get_to(const json& j, const char* key, T& v) {
  if (!j.contains(key)) return;
  try {
    v = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::input, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Theory-dependent defaults (grid, network, batching) before JSON overrides.
inline ExperimentConfig default_config(const std::string& theory) {
  ExperimentConfig c;
  c.theory = theory;
  if (theory == "schrodinger") {
    c.grid = Grid2D{12, 8, 0.01, 0.125, BoundaryCondition::periodic};
    c.mlp = MlpSpec::schrodinger();
    c.loss.reg = RegKind::slice_tamed;
    c.adam.block_batches = true;
  }
  return c;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::get_to;
  detail::only_keys(j, "config", {"theory", "grid", "K", "seed", "mlp", "loss", "adam", "newton", "stride", "mode", "tw",
                                  "rom", "out"});
  std::string theory = "wave";
  get_to(j, "theory", theory);
  ExperimentConfig c = default_config(theory);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::only_keys(g, "grid", {"n_t", "n_x", "dt", "dx", "bc"});
    get_to(g, "n_t", c.grid.n_t);
    get_to(g, "n_x", c.grid.n_x);
    get_to(g, "dt", c.grid.dt);
    get_to(g, "dx", c.grid.dx);
    std::string bc = to_string(c.grid.bc);
    get_to(g, "bc", bc);
    if (bc == "periodic") c.grid.bc = BoundaryCondition::periodic;
    else if (bc == "dirichlet") c.grid.bc = BoundaryCondition::dirichlet;
    else throw Error(ErrorKind::input, "bc must be periodic or dirichlet");
  }
  get_to(j, "K", c.k);
  get_to(j, "seed", c.seed);
  if (j.contains("mlp")) {
    const auto& m = j["mlp"];
    detail::only_keys(m, "mlp", {"widths", "activation"});
    std::vector<int> widths = c.mlp.widths;
    std::string act = to_string(c.mlp.activation);
    get_to(m, "widths", widths);
    get_to(m, "activation", act);
    c.mlp = MlpSpec::make(widths, activation_from_string(act));
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    detail::only_keys(l, "loss", {"reg", "weight", "sv_iters", "taming"});
    std::string reg = to_string(c.loss.reg);
    get_to(l, "reg", reg);
    c.loss.reg = reg_kind_from_string(reg);
    get_to(l, "weight", c.loss.weight);
    get_to(l, "sv_iters", c.loss.sv_iters);
    get_to(l, "taming", c.loss.taming);
  }
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    detail::only_keys(a, "adam", {"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "block_batches",
                                  "blocks_per_batch"});
    get_to(a, "lr", c.adam.lr);
    get_to(a, "beta1", c.adam.beta1);
    get_to(a, "beta2", c.adam.beta2);
    get_to(a, "eps", c.adam.eps);
    get_to(a, "batch_size", c.adam.batch_size);
    get_to(a, "epochs", c.adam.epochs);
    get_to(a, "block_batches", c.adam.block_batches);
    get_to(a, "blocks_per_batch", c.adam.blocks_per_batch);
  }
  if (j.contains("newton")) {
    const auto& n = j["newton"];
    detail::only_keys(n, "newton", {"tol", "max_iter", "max_sweeps"});
    get_to(n, "tol", c.newton.tol);
    get_to(n, "max_iter", c.newton.max_iter);
    get_to(n, "max_sweeps", c.newton.max_sweeps);
  }
  get_to(j, "stride", c.stride);
  if (j.contains("mode")) c.mode = solve_mode_from_string(j["mode"].get<std::string>());
  if (j.contains("tw")) {
    const auto& t = j["tw"];
    detail::only_keys(t, "tw", {"m", "sigma", "steps", "lr_speed", "lr_coef", "beta2", "wave_weight", "auto_weight",
                                "polish_iters", "restarts", "project"});
    get_to(t, "m", c.tw.m);
    get_to(t, "sigma", c.tw.sigma);
    get_to(t, "steps", c.tw.search.steps);
    get_to(t, "lr_speed", c.tw.search.lr_speed);
    get_to(t, "lr_coef", c.tw.search.lr_coef);
    get_to(t, "beta2", c.tw.search.beta2);
    get_to(t, "wave_weight", c.tw.search.wave_weight);
    get_to(t, "auto_weight", c.tw.search.auto_weight);
    get_to(t, "polish_iters", c.tw.search.polish_iters);
    get_to(t, "restarts", c.tw.search.restarts);
    get_to(t, "project", c.tw.search.project);
  }
  if (j.contains("rom")) {
    const auto& r = j["rom"];
    detail::only_keys(r, "rom", {"m_red", "center", "epochs", "lr", "batch_size"});
    get_to(r, "m_red", c.rom.m_red);
    get_to(r, "center", c.rom.center);
    get_to(r, "epochs", c.rom.epochs);
    get_to(r, "lr", c.rom.lr);
    get_to(r, "batch_size", c.rom.batch_size);
  }
  get_to(j, "out", c.out);
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::input, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace lagfield

#endif  // LAGFIELD_CONFIG_HPP
