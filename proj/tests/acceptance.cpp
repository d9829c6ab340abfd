// Acceptance checks AC1..AC10; one PASS/FAIL line each, nonzero exit on any FAIL.
#include <chrono>
#include <cstdio>
#include <random>
#include <string>

#include "lagfield/lagfield.hpp"

using namespace lagfield;

namespace {

constexpr std::uint64_t master = 42;
const Grid2D wave_grid{20, 20, 0.025, 0.05};
const Grid2D schr_grid{12, 8, 0.01, 0.125};

int failures = 0;

void report(const char* id, bool ok, const std::string& detail) {
  std::printf("%s %s %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void note(const char* id, const std::string& detail) {
  std::printf("%s info %s\n", id, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> normals(std::mt19937_64& rng, std::size_t n, double s = 1.0) {
  std::normal_distribution<double> d(0.0, s);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-10}); }

// worst componentwise relative error of `grad` against a five-point stencil of f
template <class F>
double fd_check(const std::vector<double>& x, const std::vector<double>& grad, double h, F&& f) {
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    auto at = [&](double s) {
      auto y = x;
      y[k] += s;
      return f(y);
    };
    const double fd = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
    worst = std::max(worst, rel_err(grad[k], fd));
  }
  return worst;
}

WaveProfile wave_base(int m) {
  const double c = wave_tw_speed({m, 1.0, 0}, wave_grid.dt, wave_grid.dx);
  return normalized(profile_from_samples(wave_tw_field(wave_grid, m, c).slice(0), 1, wave_grid.dx, c), wave_grid.dx);
}


// ---------------------------------------------------------------------------

void ac1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(master, "ac1"));
  const WaveDensity<> w;
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    auto t = normals(rng, 7);
    const double expect = wave_del_update(t[3], t[0], t[2], t[5], w.params());
    t[1] += 10.0;  // the solver starts away from the answer
    const auto s = solve_stencil(w, StencilKind::pts3_7stencil, t, 1);
    worst = std::max(worst, std::abs(s.value[0] - expect));
  }
  report("AC1", worst <= 1e-10, fmt("max |explicit - newton| = %.3e over 1000 states (%.2fs)", worst, seconds_since(t0)));
}

void ac2() {
  const WaveDensity<> w;
  const SchrodingerParams sp;
  auto schr_res = [&](double c) {
    const Field f = schrodinger_tw_field(schr_grid, 1, c);
    double r = 0.0;
    for (const auto& t : extract_stencils(f, StencilKind::pts4_9stencil, 1)) {
      const auto v = schrodinger_del_residual(t.values, sp);
      r = std::max({r, std::abs(v[0]), std::abs(v[1])});
    }
    return r;
  };
  auto wave_res = [&](int m) {
    const double c = wave_tw_speed({m, 1.0, 0}, wave_grid.dt, wave_grid.dx);
    double r = 0.0;
    for (const auto& t : extract_stencils(wave_tw_field(wave_grid, m, c), StencilKind::pts3_7stencil, 1))
      r = std::max(r, std::abs(del_residual(w, t)[0]));
    return std::max(r, verify_tw(w, wave_base(m), wave_grid));
  };
  const double c_s = schrodinger_tw_speed({1, 1.0, 0}, sp);
  const double c_sp = spurious_speed(1, 0, sp.dt, 1.0);
  const double r1 = wave_res(1), r2 = wave_res(2);
  const double r3 = schr_res(c_s), r4 = schr_res(c_sp);
  report("AC2", std::max({r1, r2, r3, r4}) <= 1e-10,
         fmt("max DEL residual: wave m=1 %.2e (c=%.10f), m=2 %.2e, schrodinger m=1 %.2e (c=%.8f), spurious %.2e (c=%.4f)",
             r1, wave_tw_speed({1, 1.0, 0}, wave_grid.dt, wave_grid.dx), r2, r3, c_s, r4, c_sp));
}

void ac3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(master, "ac3"));
  const Dataset ds = make_dataset(generate_trajectories(WaveDensity<>{}, 2, wave_grid, derive_seed(master, "ac3data")),
                                  StencilKind::pts3_7stencil);
  std::uniform_int_distribution<std::size_t> pick_t(0, ds.tuples.size() - 1), pick_s(0, ds.slices.size() - 1);
  double data = 0.0, reg_stencil = 0.0, reg_slice = 0.0, reg_tamed = 0.0, tw = 0.0;
  LossConfig tamed_cfg;
  tamed_cfg.taming = 1e6;  // keep the relu active so the path is exercised
  for (int k = 0; k < 20; ++k) {
    const MlpDensity m(MlpSpec::wave(), 3, 1, rng());
    const std::vector<double> theta(m.parameters().begin(), m.parameters().end());
    std::vector<const StencilTuple*> tuples;
    for (int q = 0; q < 5; ++q) tuples.push_back(&ds.tuples[pick_t(rng)]);
    std::vector<const SlicePair*> pairs{&ds.slices[pick_s(rng)]};

    auto g = parameter_gradient(theta, [&](std::span<const Var> th) { return loss_data<Var>(m, th, tuples); });
    data = std::max(data, fd_check(theta, g, 1e-4, [&](const std::vector<double>& t) {
                      return loss_data<double>(m, std::span<const double>(t), tuples);
                    }));
    g = parameter_gradient(theta, [&](std::span<const Var> th) { return loss_reg_stencil<Var>(m, th, tuples); });
    reg_stencil = std::max(reg_stencil, fd_check(theta, g, 1e-4, [&](const std::vector<double>& t) {
                             return loss_reg_stencil<double>(m, std::span<const double>(t), tuples);
                           }));
    g = parameter_gradient(theta, [&](std::span<const Var> th) {
      return loss_reg_slice<Var>(m, th, pairs, ds.grid, false);
    });
    reg_slice = std::max(reg_slice, fd_check(theta, g, 1e-4, [&](const std::vector<double>& t) {
                           return loss_reg_slice<double>(m, std::span<const double>(t), pairs, ds.grid, false);
                         }));
    g = parameter_gradient(theta, [&](std::span<const Var> th) {
      return loss_reg_slice<Var>(m, th, pairs, ds.grid, true, tamed_cfg);
    });
    reg_tamed = std::max(reg_tamed, fd_check(theta, g, 1e-4, [&](const std::vector<double>& t) {
                           return loss_reg_slice<double>(m, std::span<const double>(t), pairs, ds.grid, true, tamed_cfg);
                         }));

    WaveProfile p(1.0, 1.0 + 0.1 * normals(rng, 1)[0], 1, modes_for(wave_grid.n_x));
    p.coef = normals(rng, p.coef.size(), 0.5);
    const TwObjective o = tw_objective(m, p, wave_grid);
    std::vector<double> gt(o.grad_wave.size());
    for (std::size_t q = 0; q < gt.size(); ++q) gt[q] = o.grad_wave[q] + o.grad_unit[q];
    tw = std::max(tw, fd_check(p.pack(), gt, 1e-5, [&](const std::vector<double>& x) {
                    WaveProfile a = p;
                    a.unpack(x);
                    return loss_wave(m, a, wave_grid) + loss_unit(a, wave_grid.dx);
                  }));
  }
  const double secs = seconds_since(t0);
  const bool ok = data < 1e-5 && tw < 1e-5 && reg_stencil < 1e-4 && reg_slice < 1e-4 && reg_tamed < 1e-4 && secs < 60;
  report("AC3", ok,
         fmt("max rel err: data %.2e, reg stencil %.2e, reg slice %.2e, reg tamed %.2e, tw objective %.2e; 20 points "
             "each (%.1fs)",
             data, reg_stencil, reg_slice, reg_tamed, tw, secs));
}

void ac4() {
  std::mt19937_64 rng(derive_seed(master, "ac4"));
  const WaveDensity<> w;
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto a = normals(rng, 9);
    auto chi = [](double p, double q, double r) {
      return [p, q, r](const auto& x) {
        using std::sin;
        return p * sin(q * x) + r * x * x * x;
      };
    };
    const auto gm = gauge_modify(w, chi(a[0], a[1], a[2]), chi(a[3], a[4], a[5]), chi(a[6], a[7], a[8]));
    for (int t = 0; t < 500; ++t) {
      StencilTuple s;
      s.values = normals(rng, 7);
      worst = std::max(worst, std::abs(del_residual(gm, s)[0] - del_residual(w, s)[0]));
    }
  }
  report("AC4", worst <= 1e-10, fmt("max |DEL(gauged) - DEL(base)| = %.3e over 5 x 500", worst));
}

void ac5() {
  std::mt19937_64 rng(derive_seed(master, "ac5"));
  const WaveDensity<> w;
  int passed = 0;
  std::string verdicts;
  for (int k = 0; k < 10; ++k) {
    auto t = normals(rng, 7);
    const std::vector<double> far{t[1] + 50.0 * (k + 1)};
    const auto s = solve_stencil(w, StencilKind::pts3_7stencil, t, 1, NewtonConfig{}, far);
    const RateVerdict v = verify_quadratic_rate(s.report);
    passed += v.passed();
    verdicts += std::string(k ? "," : "") + to_string(v.status) + "/" + std::to_string(s.report.iterations);
  }
  report("AC5", passed >= 9, fmt("%d/10 quadratic verdicts on the analytic wave density (verdict/iterations: %s)",
                                 passed, verdicts.c_str()));

  // the same check where the forward equation is nonlinear
  auto f = [](auto /*theta*/, auto x) {
    const auto qt = (x[1] - x[0]) / 0.025;
    const auto qx = (x[2] - x[0]) / 0.05;
    return 0.5 * qt * qt + 0.05 * qt * qt * qt * qt - 0.5 * qx * qx - 0.5 * x[0] * x[0];
  };
  const LambdaDensity<decltype(f)> stiff(f, 3, 1);
  int nl = 0;
  for (int k = 0; k < 10; ++k) {
    auto t = normals(rng, 7, 0.1);
    NewtonConfig cfg;
    const auto s = solve_stencil(stiff, StencilKind::pts3_7stencil, t, 1, cfg, std::vector<double>{t[0] + 0.5});
    nl += verify_quadratic_rate(s.report).passed();
  }
  note("AC5", fmt("quartic-kinetic wave density: %d/10 quadratic verdicts", nl));
}

void ac6() {
  std::mt19937_64 rng(derive_seed(master, "ac6"));
  double worst50 = 0.0, worst3 = 0.0;
  for (int k = 0; k < 50; ++k) {
    Mat<double> a(20, 20);
    const auto v = normals(rng, 400);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) a(i, j) = v[static_cast<std::size_t>(20 * i + j)];
    const double exact = smallest_singular_value_svd(a);
    worst50 = std::max(worst50, std::abs(smallest_singular_value(a, 50) - exact) / exact);
    worst3 = std::max(worst3, std::abs(smallest_singular_value(a, 3) - exact) / exact);
  }
  report("AC6", worst50 <= 1e-8 && worst3 <= 0.2,
         fmt("50 iterations max rel err %.3e, 3 iterations max rel err %.3e over 50 matrices", worst50, worst3));
}

struct Trained {
  MlpDensity model;
  double seconds;
};

int train_epochs = 1500;

Trained ac7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fields = generate_trajectories(WaveDensity<>{}, 10, wave_grid, derive_seed(master, "data"));
  const Dataset ds = make_dataset(fields, StencilKind::pts3_7stencil);
  MlpDensity m(MlpSpec::wave(), 3, 1, derive_seed(master, "init"));
  AdamConfig ac;
  ac.epochs = train_epochs;
  TrainHooks hooks{[](const EpochRecord& r) {
    if (r.epoch % 250 == 0) note("AC7", fmt("epoch %d l_data %.4e l_reg %.4e (%.0fs)", r.epoch, r.l_data, r.l_reg, r.wall));
    return true;
  }};
  const TrainRun run = train(m, ds, LossConfig{}, ac, derive_seed(master, "shuffle"), hooks);
  const double drop = run.initial.l_data / run.history.back().l_data;

  const Field truth = generate_trajectories(WaveDensity<>{}, 1, wave_grid, derive_seed(master, "unseen")).front();
  double err = std::numeric_limits<double>::infinity();
  std::string why;
  try {
    err = max_abs_difference(stencil_prediction(m, truth), truth);
  } catch (const Error& e) {
    why = std::string(" (propagation failed: ") + e.what() + ")";
  }
  const double secs = seconds_since(t0);
  report("AC7", drop >= 1e3 && err <= 0.1 && secs <= 1800,
         fmt("%d epochs, l_data %.4e -> %.4e (drop %.3g), unseen trajectory max error %.4f%s (%.0fs)", ac.epochs,
             run.initial.l_data, run.history.back().l_data, drop, err, why.c_str(), secs));
  return {m, secs};
}

void ac8(const MlpDensity& trained) {
  const auto t0 = std::chrono::steady_clock::now();
  const TwSearchConfig cfg = TwSearchConfig::robust();
  const std::uint64_t seed = derive_seed(master, "noise");
  std::string detail;
  bool ok = true;
  for (int m : {1, 2}) {
    const WaveProfile base = wave_base(m);
    const TwSearch r = find_tw(WaveDensity<>{}, base, 0.5, seed, wave_grid, cfg);
    const double dc = std::abs(r.profile.c - base.c);
    ok = ok && dc <= 1e-3;
    detail += fmt("wave m=%d |dc| %.2e; ", m, dc);
  }
  const SchrodingerParams sp;
  const double cs = schrodinger_tw_speed({1, 1.0, 0}, sp);
  const WaveProfile sbase =
      normalized(profile_from_samples(schrodinger_tw_field(schr_grid, 1, cs).slice(0), 2, schr_grid.dx, cs), schr_grid.dx);
  const TwSearch rs = find_tw(SchrodingerDensity{}, sbase, 0.5, seed, schr_grid, cfg);
  const double dcs = std::abs(rs.profile.c - cs);
  ok = ok && dcs <= 1e-3;
  detail += fmt("schrodinger m=1 |dc| %.2e; ", dcs);

  TwSearchConfig tcfg = cfg;
  tcfg.restarts = 8;
  tcfg.project = false;
  const WaveProfile base = wave_base(1);
  const TwSearch rt = find_tw(trained, base, 0.5, seed, wave_grid, tcfg);
  const double dct = std::abs(rt.profile.c - base.c);
  ok = ok && dct <= 0.05;
  const double field_err = max_abs_difference(fill_tw(rt.profile, wave_grid), fill_tw(base, wave_grid));
  detail += fmt("trained model |dc| %.3e (c=%.6f, max DEL %.2e, field error %.3f)", dct, rt.profile.c,
                rt.max_residual, field_err);
  report("AC8", ok, detail + fmt(" (%.0fs)", seconds_since(t0)));
}

void ac9() {
  const SchrodingerDensity s;
  const auto refs = generate_trajectories(s, 5, schr_grid, derive_seed(master, "ac9"));
  double worst = 0.0;
  for (const Field& f : refs) {
    const std::vector<double> u0(f.slice(0).begin(), f.slice(0).end());
    const auto p = propagate_from_initial(s, u0, std::nullopt, schr_grid.n_t, schr_grid);
    worst = std::max(worst, max_modulus_difference(p.field, f));
  }
  const Dataset ds = make_dataset(refs, StencilKind::pts4_9stencil);
  const double tamed =
      loss_reg_slice<double>(s, std::span<const double>(), all_slices(ds), ds.grid, true, LossConfig{});
  report("AC9", worst <= 1e-9 && tamed == 0.0,
         fmt("position-only propagation max error %.3e over 5 references; tamed regularizer %.1f on %zu slices", worst,
             tamed, ds.slices.size()));
}

void ac10(const MlpDensity& stencil_model) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fields = generate_trajectories(WaveDensity<>{}, 10, wave_grid, derive_seed(master, "data"));
  const Eigen::MatrixXd snaps = snapshot_matrix(fields);
  const PcaMap map = fit_pca(snaps, 2);
  const double orth = (map.basis.transpose() * map.basis - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int m = 1; m <= wave_grid.n_x; ++m) {
    const double e = reconstruction_error(fit_pca(snaps, m), snaps).mean;
    monotone = monotone && e <= prev + 1e-12;
    prev = e;
  }

  MlpDensity latent(MlpSpec::latent(2), 2, 2, derive_seed(master, "latent-init"));
  AdamConfig ac;
  ac.epochs = 2000;
  const TrainRun run = train_latent(latent, latent_dataset(map, fields), ac, derive_seed(master, "latent-shuffle"));

  const WaveDensity<> truth_model;
  const auto sine = sine_slice(wave_grid, 2);
  const Field sine_truth = propagate(truth_model, sine, sine, wave_grid.n_t - 1, wave_grid).field;
  const Field tw_truth = wave_tw_field(wave_grid, 1, wave_tw_speed({1, 1.0, 0}, wave_grid.dt, wave_grid.dx));

  auto error_of = [](auto&& predict, const Field& truth) {
    try {
      return max_abs_difference(predict(), truth);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double rom_sine = error_of([&] { return rom_prediction(latent, map, sine_truth); }, sine_truth);
  const double rom_tw = error_of([&] { return rom_prediction(latent, map, tw_truth); }, tw_truth);
  const double st_sine = error_of([&] { return stencil_prediction(stencil_model, sine_truth); }, sine_truth);
  const double st_tw = error_of([&] { return stencil_prediction(stencil_model, tw_truth); }, tw_truth);
  const bool ok = rom_sine > st_sine && rom_tw > st_tw && orth <= 1e-12 && monotone;
  report("AC10", ok,
         fmt("sine task: rom %.4f vs stencil %.4f; tw task: rom %.4f vs stencil %.4f; |A'^T A' - I| %.1e; "
             "reconstruction error monotone %s; latent l_data %.3e -> %.3e (%.0fs)",
             rom_sine, st_sine, rom_tw, st_tw, orth, monotone ? "yes" : "no", run.initial.l_data,
             run.history.back().l_data, seconds_since(t0)));
}

template <class F>
void guarded(const char* id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) train_epochs = std::stoi(argv[1]);  // shorter runs for development only
  guarded("AC1", ac1);
  guarded("AC2", ac2);
  guarded("AC3", ac3);
  guarded("AC4", ac4);
  guarded("AC5", ac5);
  guarded("AC6", ac6);
  std::optional<MlpDensity> trained;
  guarded("AC7", [&] { trained = ac7().model; });
  if (trained) {
    guarded("AC8", [&] { ac8(*trained); });
  } else {
    report("AC8", false, "no trained model");
  }
  guarded("AC9", ac9);
  if (trained) {
    guarded("AC10", [&] { ac10(*trained); });
  } else {
    report("AC10", false, "no trained model");
  }
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
