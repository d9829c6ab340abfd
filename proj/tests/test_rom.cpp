#include "catch_amalgamated.hpp"

#include <random>

#include "lagfield/rom.hpp"

using namespace lagfield;
using Catch::Approx;

namespace {

const Grid2D wave_grid{20, 20, 0.025, 0.05};

std::vector<Field> wave_fields(int k) { return generate_trajectories(WaveDensity<>{}, k, wave_grid, 17); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

// L(q0, q1) = ½|(q1 − q0)/h|² − ½ω²|q0|², an exactly solvable chain
auto oscillator(int n, double h, double omega) {
  auto f = [n, h, omega](auto /*theta*/, auto x) {
    using S = std::decay_t<decltype(x[0])>;
    S l(0.0);
    for (int k = 0; k < n; ++k) {
      const S v = (x[n + k] - x[k]) / h;
      l = l + 0.5 * v * v - 0.5 * omega * omega * x[k] * x[k];
    }
    return l;
  };
  return LambdaDensity<decltype(f)>(f, 2, n);
}

}  // namespace

TEST_CASE("pca basis is orthonormal and pr after R is the identity") {
  const Eigen::MatrixXd s = snapshot_matrix(wave_fields(4));
  CHECK(s.rows() == 20);
  CHECK(s.cols() == 4 * 21);
  for (int m : {1, 2, 5}) {
    const PcaMap map = fit_pca(s, m);
    CHECK((map.basis.transpose() * map.basis - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() <= 1e-12);
    std::vector<double> q(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) q[k] = 0.3 * k - 1.1;
    const auto back = map.project(map.lift(q));
    for (int k = 0; k < m; ++k) CHECK(back[k] == Approx(q[k]).margin(1e-12));
  }
}

TEST_CASE("eckart-young: residual energy equals the discarded singular values") {
  const Eigen::MatrixXd s = snapshot_matrix(wave_fields(4));
  double prev = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= 20; ++m) {
    const PcaMap map = fit_pca(s, m);
    const double res = (s - map.basis * (map.basis.transpose() * s)).squaredNorm();
    double tail = 0.0;
    for (Eigen::Index k = m; k < map.singular_values.size(); ++k) tail += map.singular_values(k) * map.singular_values(k);
    CHECK(std::abs(res - tail) <= 1e-9 * s.squaredNorm());
    const double e = reconstruction_error(map, s).mean;
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
  CHECK(prev <= 1e-12);
}

TEST_CASE("pca edge cases") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(4, 3);
  s.col(0) << 1, 2, 3, 4;
  s.col(2) = 2.0 * s.col(0);
  const PcaMap map = fit_pca(s, 2);
  CHECK(map.rank == 1);
  CHECK(map.padded);
  CHECK(reconstruction_error(map, s).skipped == 1);
  CHECK(reconstruction_error(map, s).mean <= 1e-14);
  CHECK_THROWS_AS(fit_pca(s, 0), Error);
  CHECK_THROWS_AS(fit_pca(s, 5), Error);
  const PcaMap centred = fit_pca(s, 1, true);
  CHECK(centred.mean(3) == Approx(4.0));
}

TEST_CASE("latent datasets and chains") {
  const auto fields = wave_fields(3);
  const PcaMap map = fit_pca(snapshot_matrix(fields), 2);
  const Dataset ds = latent_dataset(map, fields);
  CHECK(ds.tuples.size() == 3u * 19u);
  CHECK(ds.tuples.front().values.size() == 6u);
  const auto q = project_field(map, fields[1]);
  CHECK(q.size() == 21u);
  const Field lifted = lift_chain(map, q, wave_grid, 1);
  CHECK(lifted.times() == 21);
  const auto again = project_field(map, lifted);
  for (std::size_t i = 0; i < q.size(); ++i)
    for (int k = 0; k < 2; ++k) CHECK(again[i][k] == Approx(q[i][k]).margin(1e-12));
}

TEST_CASE("latent propagation matches the exact oscillator chain") {
  const double h = 0.025, omega = 3.0;
  const auto m = oscillator(2, h, omega);
  const std::vector<double> q0{1.0, -0.5}, q1{0.99, -0.48};
  const auto lp = propagate_latent(m, q0, q1, 30);
  REQUIRE(lp.q.size() == 31u);
  std::vector<std::vector<double>> ref{q0, q1};
  for (int i = 1; i < 30; ++i) {
    std::vector<double> next(2);
    for (int k = 0; k < 2; ++k) next[k] = 2 * ref[i][k] - ref[i - 1][k] - h * h * omega * omega * ref[i][k];
    ref.push_back(next);
  }
  for (std::size_t i = 0; i < ref.size(); ++i)
    for (int k = 0; k < 2; ++k) CHECK(lp.q[i][k] == Approx(ref[i][k]).margin(1e-10));
  CHECK_THROWS_AS(propagate_latent(m, std::vector<double>{1.0}, q1, 3), Error);
}

TEST_CASE("stencil prediction with the true density reproduces the truth") {
  const Field truth = wave_fields(1).front();
  CHECK(max_abs_difference(stencil_prediction(WaveDensity<>{}, truth), truth) <= 1e-10);
  const auto s = sine_slice(wave_grid, 2);
  CHECK(s[5] == Approx(std::sin(4 * std::numbers::pi * 0.25)).margin(1e-15));
  CHECK(s[1] == Approx(std::sin(4 * std::numbers::pi * 0.05)));
}

TEST_CASE("latent travelling-wave objective gradient matches central differences") {
  const auto fields = wave_fields(2);
  const PcaMap map = fit_pca(snapshot_matrix(fields), 2);
  const MlpDensity m(MlpSpec::latent(2), 2, 2, 3ull);
  WaveProfile p(1.0, 0.9, 1, 11);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& v : p.coef) v = n(rng);
  const TwObjective o = latent_tw_objective(m, map, p, wave_grid);
  const auto x = p.pack();
  auto at = [&](std::size_t k, double h) {
    auto y = x;
    y[k] += h;
    WaveProfile a = p;
    a.unpack(y);
    return latent_tw_objective(m, map, a, wave_grid).wave;
  };
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = 1e-5;
    const double fd = (8 * (at(k, h) - at(k, -h)) - (at(k, 2 * h) - at(k, -2 * h))) / (12 * h);
    CHECK(rel_err(o.grad_wave[k], fd) < 1e-5);
  }
}

TEST_CASE("latent training checks its inputs") {
  const auto fields = wave_fields(1);
  const PcaMap map = fit_pca(snapshot_matrix(fields), 2);
  const Dataset ds = latent_dataset(map, fields);
  MlpDensity wrong(MlpSpec::wave(), 3, 1, 1ull);
  CHECK_THROWS_AS(train_latent(wrong, ds, AdamConfig{}, 1), Error);
  MlpDensity ok(MlpSpec::latent(2), 2, 2, 1ull);
  AdamConfig ac;
  ac.epochs = 2;
  const TrainRun run = train_latent(ok, ds, ac, 1);
  CHECK(run.history.size() == 2u);
  CHECK(run.params.size() == 170u);
}
