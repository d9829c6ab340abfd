// lagfield: data generation, training, simulation, evaluation, travelling-wave
// search and the reduced-order baseline, driven by a JSON config.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lagfield/lagfield.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lagfield;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> stride;
  std::optional<std::string> mode;
};

struct Run {
  ExperimentConfig cfg;
  std::string config_text;  // verbatim, empty when no file was given
  fs::path out;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

Run prepare(const Common& c, const std::string& theory_hint = "wave") {
  Run r;
  if (!c.config.empty()) {
    r.config_text = read_text(c.config);
    r.cfg = parse_config(r.config_text);
  } else {
    r.cfg = default_config(theory_hint);
  }
  if (c.seed) r.cfg.seed = *c.seed;
  if (c.out) r.cfg.out = *c.out;
  if (c.stride) r.cfg.stride = *c.stride;
  if (c.mode) r.cfg.mode = solve_mode_from_string(*c.mode);
  r.cfg.validate();
  r.out = r.cfg.out;
  std::error_code ec;
  fs::create_directories(r.out, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + r.out.string() + ": " + ec.message());
  if (!r.config_text.empty()) write_text(r.out / "config.json", r.config_text);
  return r;
}

struct Seeds {
  std::uint64_t data, init, shuffle, noise;
};

Seeds split(std::uint64_t master) {
  return {derive_seed(master, "data"), derive_seed(master, "init"), derive_seed(master, "shuffle"),
          derive_seed(master, "noise")};
}

json seeds_json(std::uint64_t master) {
  const Seeds s = split(master);
  return {{"master", master}, {"data", s.data}, {"init", s.init}, {"shuffle", s.shuffle}, {"noise", s.noise}};
}

std::string traj_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%03d.csv", t);
  return buf;
}

std::vector<Field> generate(const ExperimentConfig& cfg) {
  const DensityModel ref = reference_model(cfg.theory, cfg.grid.dt, cfg.grid.dx);
  return std::visit(
      [&](const auto& m) { return generate_trajectories(m, cfg.k, cfg.grid, split(cfg.seed).data, cfg.newton, cfg.mode); },
      ref);
}

std::vector<Field> read_trajectories(const fs::path& dir) {
  const json manifest = json::parse(read_text((dir / "manifest.json").string()));
  std::vector<Field> fields;
  for (const auto& name : manifest.at("files")) {
    fields.push_back(load((dir / name.get<std::string>()).string(), [](std::istream& in) { return read_field(in); }));
  }
  return fields;
}

StencilKind data_kind(const std::string& theory) {
  return theory == "wave" ? StencilKind::pts3_7stencil : StencilKind::pts4_9stencil;
}

int arity_of(const std::string& theory) { return theory == "wave" ? 3 : 4; }
int components_of(const std::string& theory) { return theory == "wave" ? 1 : 2; }

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c) {
  const Run r = prepare(c);
  const auto fields = generate(r.cfg);
  json files = json::array();
  for (std::size_t t = 0; t < fields.size(); ++t) {
    const std::string name = traj_name(static_cast<int>(t));
    save((r.out / name).string(), fields[t], [](std::ostream& o, const Field& f) { write_field(o, f); });
    files.push_back(name);
  }
  const Dataset ds = make_dataset(fields, data_kind(r.cfg.theory), r.cfg.stride);
  const json manifest = {{"format", "lagfield dataset 1"},
                         {"theory", r.cfg.theory},
                         {"K", r.cfg.k},
                         {"stride", r.cfg.stride},
                         {"tuples", ds.tuples.size()},
                         {"slice_pairs", ds.slices.size()},
                         {"seeds", seeds_json(r.cfg.seed)},
                         {"files", files}};
  write_text(r.out / "manifest.json", manifest.dump(2) + "\n");
  print_json({{"trajectories", fields.size()}, {"tuples", ds.tuples.size()}});
  return 0;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const Run r = prepare(c);
  const fs::path dir = data_dir.empty() ? r.out : fs::path(data_dir);
  const auto fields = read_trajectories(dir);
  const Dataset ds = make_dataset(fields, data_kind(r.cfg.theory), r.cfg.stride);
  const Seeds s = split(r.cfg.seed);
  MlpDensity model(r.cfg.mlp, arity_of(r.cfg.theory), components_of(r.cfg.theory), s.init);
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %d l_data %.6e l_reg %.6e\n", e.epoch, e.l_data, e.l_reg);
    return true;
  };
  TrainRun run;
  try {
    run = train(model, ds, r.cfg.loss, r.cfg.adam, s.shuffle, hooks);
  } catch (const NonFiniteError& e) {
    model.set_parameters(e.last_good());
    save((r.out / "checkpoint_last_good.txt").string(), DensityModel(model),
         [](std::ostream& o, const DensityModel& m) { write_checkpoint(o, m); });
    throw;
  }
  save((r.out / "checkpoint.txt").string(), DensityModel(model),
       [](std::ostream& o, const DensityModel& m) { write_checkpoint(o, m); });
  save((r.out / "loss_history.csv").string(), run, [](std::ostream& o, const TrainRun& t) { write_loss_history(o, t); });
  const double last = run.history.empty() ? run.initial.l_data : run.history.back().l_data;
  print_json({{"epochs", run.history.size()}, {"l_data_initial", run.initial.l_data}, {"l_data_final", last}});
  return 0;
}

int cmd_simulate(const Common& c, const std::string& checkpoint, const std::string& initial, std::optional<int> steps) {
  const Run r = prepare(c);
  const DensityModel model = load(checkpoint, [](std::istream& in) { return read_checkpoint(in); });
  const Field init = load(initial, [](std::istream& in) { return read_field(in); });
  const Grid2D g = init.grid();
  Propagation p = std::visit(
      [&](const auto& m) -> Propagation {
        if (m.components() != init.d()) throw Error(ErrorKind::shape, "initial data components do not match the model");
        if (init.times() >= 2) {
          const int n = steps ? *steps : r.cfg.grid.n_t - 1;
          if (n < 0) throw Error(ErrorKind::input, "steps must be >= 0");
          return propagate(m, init.slice(0), init.slice(1), n, g, r.cfg.newton, r.cfg.mode);
        }
        if (!m.linear_in_velocity()) {
          throw Error(ErrorKind::input, "a single initial slice needs a density linear in velocities");
        }
        const int n = steps ? *steps : r.cfg.grid.n_t;
        if (n == 0) return Propagation{init, {}};
        std::vector<double> u0(init.slice(0).begin(), init.slice(0).end());
        return propagate_from_initial(m, u0, std::nullopt, n, g, r.cfg.newton, r.cfg.mode);
      },
      model);
  save((r.out / "field.csv").string(), p.field, [](std::ostream& o, const Field& f) { write_field(o, f); });
  save((r.out / "convergence.csv").string(), p.reports,
       [](std::ostream& o, const std::vector<ConvergenceReport>& v) { write_convergence(o, v); });
  print_json({{"times", p.field.times()}, {"solves", p.reports.size()}});
  return 0;
}

int cmd_eval(const Common& c, const std::string& predicted, const std::string& reference) {
  const Run r = prepare(c);
  const auto reader = [](std::istream& in) { return read_field(in); };
  const Field a = load(predicted, reader);
  const Field b = load(reference, reader);
  json report = {{"max_abs_error", max_abs_difference(a, b)}, {"times", a.times()}, {"d", a.d()}};
  if (a.d() == 2) report["max_modulus_error"] = max_modulus_difference(a, b);
  write_text(r.out / "eval.json", report.dump(2) + "\n");
  print_json(report);
  return 0;
}

WaveProfile dispersion_profile(const ExperimentConfig& cfg) {
  const Grid2D& g = cfg.grid;
  const DispersionQuery q{cfg.tw.m, g.length(), 0};
  if (cfg.theory == "wave") {
    const double c = wave_tw_speed(q, g.dt, g.dx);
    return normalized(profile_from_samples(wave_tw_field(g, cfg.tw.m, c).slice(0), 1, g.dx, c), g.dx);
  }
  SchrodingerParams p;
  p.dt = g.dt;
  p.dx = g.dx;
  const double c = schrodinger_tw_speed(q, p);
  return normalized(profile_from_samples(schrodinger_tw_field(g, cfg.tw.m, c).slice(0), 2, g.dx, c), g.dx);
}

json search_report(const TwSearch& s, const WaveProfile& base) {
  return {{"c", s.profile.c},          {"c_init", base.c},          {"loss_wave", s.loss_wave},
          {"loss_unit", s.loss_unit},  {"max_residual", s.max_residual}, {"best_step", s.best_step},
          {"polish_iterations", s.polish_iterations}, {"restart", s.restart}};
}

int cmd_find_tw(const Common& c, const std::string& checkpoint, const std::string& profile,
                std::optional<double> sigma) {
  const Run r = prepare(c);
  const DensityModel model = checkpoint.empty() ? reference_model(r.cfg.theory, r.cfg.grid.dt, r.cfg.grid.dx)
                                                : load(checkpoint, [](std::istream& in) { return read_checkpoint(in); });
  const WaveProfile base = profile.empty() ? dispersion_profile(r.cfg)
                                           : load(profile, [](std::istream& in) { return read_profile(in); });
  const double s = sigma ? *sigma : r.cfg.tw.sigma;
  const TwSearch res = std::visit(
      [&](const auto& m) { return find_tw(m, base, s, split(r.cfg.seed).noise, r.cfg.grid, r.cfg.tw.search); }, model);
  save((r.out / "profile.txt").string(), res.profile, [](std::ostream& o, const WaveProfile& p) { write_profile(o, p); });
  std::ofstream hist(r.out / "tw_history.csv");
  hist << "step,objective\n";
  for (std::size_t k = 0; k < res.history.size(); ++k) hist << k << ',' << fmt17(res.history[k]) << '\n';
  json report = search_report(res, base);
  report["sigma"] = s;
  write_text(r.out / "tw_report.json", report.dump(2) + "\n");
  print_json(report);
  return 0;
}

int cmd_rom(const Common& c, const std::string& checkpoint) {
  const Run r = prepare(c);
  if (r.cfg.theory != "wave") throw Error(ErrorKind::capability, "the reduced-order pipeline is set up for the wave theory");
  const Seeds s = split(r.cfg.seed);
  const auto fields = generate(r.cfg);
  const Eigen::MatrixXd snaps = snapshot_matrix(fields);
  const PcaMap map = fit_pca(snaps, r.cfg.rom.m_red, r.cfg.rom.center);
  const ReconstructionError rec = reconstruction_error(map, snaps);
  save((r.out / "pca.txt").string(), map, [](std::ostream& o, const PcaMap& m) { write_pca(o, m); });

  MlpDensity latent(MlpSpec::latent(r.cfg.rom.m_red), 2, r.cfg.rom.m_red, s.init);
  AdamConfig ac = r.cfg.adam;
  ac.epochs = r.cfg.rom.epochs;
  ac.lr = r.cfg.rom.lr;
  ac.batch_size = r.cfg.rom.batch_size;
  ac.block_batches = false;
  const TrainRun run = train_latent(latent, latent_dataset(map, fields), ac, s.shuffle);
  save((r.out / "latent_checkpoint.txt").string(), DensityModel(latent),
       [](std::ostream& o, const DensityModel& m) { write_checkpoint(o, m); });
  save((r.out / "latent_loss_history.csv").string(), run,
       [](std::ostream& o, const TrainRun& t) { write_loss_history(o, t); });

  const WaveDensity<> ref(WaveParams<>{r.cfg.grid.dt, r.cfg.grid.dx});
  const Grid2D& g = r.cfg.grid;
  const auto sine = sine_slice(g, 2);
  const Field sine_truth = propagate(ref, sine, sine, g.n_t - 1, g, r.cfg.newton, r.cfg.mode).field;
  const double c_tw = wave_tw_speed({1, g.length(), 0}, g.dt, g.dx);
  const Field tw_truth = wave_tw_field(g, 1, c_tw);

  json report = {{"reconstruction_error", rec.mean},
                 {"singular_values", std::vector<double>(map.singular_values.data(),
                                                         map.singular_values.data() + map.singular_values.size())},
                 {"rom_sine_error", max_abs_difference(rom_prediction(latent, map, sine_truth, r.cfg.newton), sine_truth)},
                 {"rom_tw_error", max_abs_difference(rom_prediction(latent, map, tw_truth, r.cfg.newton), tw_truth)}};
  if (!checkpoint.empty()) {
    const DensityModel model = load(checkpoint, [](std::istream& in) { return read_checkpoint(in); });
    std::visit(
        [&](const auto& m) {
          report["stencil_sine_error"] =
              max_abs_difference(stencil_prediction(m, sine_truth, r.cfg.newton, r.cfg.mode), sine_truth);
          report["stencil_tw_error"] =
              max_abs_difference(stencil_prediction(m, tw_truth, r.cfg.newton, r.cfg.mode), tw_truth);
        },
        model);
  }
  write_text(r.out / "rom_report.json", report.dump(2) + "\n");
  print_json(report);
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "experiment config (JSON)");
  sub->add_option("--seed", c.seed, "master seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--stride", c.stride, "stencil extraction stride")->check(CLI::PositiveNumber);
  sub->add_option("--mode", c.mode, "solver mode")->check(CLI::IsMember({"stencil", "timeslice"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn and simulate discrete Lagrangian field theories"};
  app.require_subcommand(1);
  Common common;
  std::string data_dir, checkpoint, initial, predicted, reference, profile;
  std::optional<int> steps;
  std::optional<double> sigma;

  auto* gen = app.add_subcommand("gen-data", "generate reference trajectories and a dataset manifest");
  add_common(gen, common);

  auto* tr = app.add_subcommand("train", "train a density on generated data");
  add_common(tr, common);
  tr->add_option("--data", data_dir, "directory written by gen-data (default: --out)");

  auto* sim = app.add_subcommand("simulate", "propagate initial data with a checkpoint");
  add_common(sim, common);
  sim->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sim->add_option("--initial", initial, "field CSV holding U^0 (and U^1)")->required();
  sim->add_option("--steps", steps, "time steps to add");

  auto* ev = app.add_subcommand("eval", "compare a predicted field with a reference");
  add_common(ev, common);
  ev->add_option("--predicted", predicted)->required();
  ev->add_option("--reference", reference)->required();

  auto* tw = app.add_subcommand("find-tw", "search for a travelling wave");
  add_common(tw, common);
  tw->add_option("--checkpoint", checkpoint, "model checkpoint (default: the reference density)");
  tw->add_option("--profile", profile, "initial profile (default: discrete dispersion relation)");
  tw->add_option("--sigma", sigma, "noise standard deviation");

  auto* rom = app.add_subcommand("rom", "PCA basis, latent density and comparison report");
  add_common(rom, common);
  rom->add_option("--checkpoint", checkpoint, "stencil model to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*tr) return cmd_train(common, data_dir);
    if (*sim) return cmd_simulate(common, checkpoint, initial, steps);
    if (*ev) return cmd_eval(common, predicted, reference);
    if (*tw) return cmd_find_tw(common, checkpoint, profile, sigma);
    if (*rom) return cmd_rom(common, checkpoint);
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "error[" << to_string(ErrorKind::io) << "]: " << e.what() << '\n';
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
