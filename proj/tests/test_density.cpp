#include "catch_amalgamated.hpp"

#include <random>

#include "lagfield/density.hpp"
#include "lagfield/theories.hpp"
#include "lagfield/training.hpp"

using namespace lagfield;
using Catch::Approx;

namespace {

std::vector<double> normals(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

MlpDensity zero_mlp(const MlpSpec& s, int arity, int d) {
  return MlpDensity(s, arity, d, std::vector<double>(s.parameter_count(), 0.0));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("parameter counts follow the bias policy") {
  CHECK(MlpSpec::wave().parameter_count() == 160);
  CHECK(MlpSpec::latent(2).parameter_count() == 170);
  MlpSpec s = MlpSpec::make({4, 5, 1}, Activation::tanh);
  CHECK(s.parameter_count() == 4 * 5 + 5 + 5);
  s.bias = {false, true};
  CHECK(s.parameter_count() == 4 * 5 + 5 + 1);
  CHECK_THROWS_AS(MlpDensity(MlpSpec::wave(), 3, 2, 1ull), Error);
  CHECK_THROWS_AS(MlpDensity(MlpSpec::wave(), 3, 1, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("zero mlp is identically zero") {
  const auto m = zero_mlp(MlpSpec::wave(), 3, 1);
  const auto x = normals(3, 1);
  CHECK(eval(m, x) == 0.0);
  for (double g : input_grad(m, x)) CHECK(g == 0.0);
  CHECK(mixed_hessian_block(m, x, 0, 1)(0, 0) == 0.0);
}

TEST_CASE("eval rejects wrong input length") {
  const MlpDensity m(MlpSpec::wave(), 3, 1, 2ull);
  CHECK_THROWS_AS(eval(m, std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("analytic wave values") {
  const WaveDensity<> w(WaveParams<>{1.0, 1.0});
  CHECK(eval(w, std::vector<double>{0.0, 1.0, 0.0}) == Approx(0.5));
  CHECK(eval(w, std::vector<double>{1.0, 1.0, 1.0}) == Approx(-0.5));
  CHECK(input_grad(w, std::vector<double>{0.0, 1.0, 0.0})[1] == Approx(1.0));
}

TEST_CASE("wave mixed block in time is -1/dt^2") {
  const WaveDensity<> w;
  const auto x = normals(3, 4);
  const double h = mixed_hessian_block(w, x, 0, 1)(0, 0);
  CHECK(h == Approx(-1600.0).epsilon(1e-12));
  // independent oracle: second central difference of the value
  const double e = 1e-3;
  auto f = [&](double da, double db) {
    std::vector<double> y = x;
    y[0] += da;
    y[1] += db;
    return eval(w, y);
  };
  const double fd = (f(e, e) - f(e, -e) - f(-e, e) + f(-e, -e)) / (4 * e * e);
  CHECK(fd == Approx(h).epsilon(1e-6));
}

TEST_CASE("mlp input gradient matches central differences") {
  for (auto act : {Activation::tanh, Activation::softplus}) {
    const MlpDensity m(MlpSpec::make({8, 6, 6, 1}, act), 4, 2, 17ull);
    const auto x = normals(8, 3);
    const auto g = input_grad(m, x);
    for (int k = 0; k < 8; ++k) {
      std::vector<double> xp = x, xm = x;
      xp[k] += 1e-5;
      xm[k] -= 1e-5;
      const double fd = (eval(m, xp) - eval(m, xm)) / 2e-5;
      CHECK(rel_err(g[k], fd) < 1e-6);
    }
  }
}

TEST_CASE("mixed hessian blocks are symmetric") {
  const MlpDensity m(MlpSpec::make({8, 6, 1}, Activation::tanh), 4, 2, 5ull);
  const auto x = normals(8, 6);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const auto ab = mixed_hessian_block(m, x, a, b);
      const auto ba = mixed_hessian_block(m, x, b, a);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(std::abs(ab(r, c) - ba(c, r)) <= 1e-12);
    }
  CHECK_THROWS_AS(mixed_hessian_block(m, x, 0, 4), Error);
}

TEST_CASE("parameter gradient of a single linear layer is the input with a bias 1") {
  MlpSpec s = MlpSpec::make({3, 1}, Activation::tanh);
  s.bias = {true};
  const MlpDensity m(s, 3, 1, std::vector<double>{0.3, -0.2, 0.5, 0.1});
  const std::vector<double> x{1.5, -2.0, 0.25};
  const auto g = parameter_gradient(m.parameters(), [&](std::span<const Var> th) {
    return density_value<Var, double>(m, th, std::span<const double>(x));
  });
  CHECK(g == std::vector<double>{1.5, -2.0, 0.25, 1.0});
}

TEST_CASE("data loss parameter gradient matches central differences") {
  const MlpDensity m(MlpSpec::make({3, 5, 1}, Activation::tanh), 3, 1, 21ull);
  StencilTuple t;
  t.values = normals(7, 8);
  const std::vector<const StencilTuple*> batch{&t};
  const auto theta = std::vector<double>(m.parameters().begin(), m.parameters().end());
  const auto g = parameter_gradient(theta, [&](std::span<const Var> th) { return loss_data<Var>(m, th, batch); });
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto tp = theta, tm = theta;
    tp[k] += 1e-6;
    tm[k] -= 1e-6;
    const double fd = (loss_data<double>(m, std::span<const double>(tp), batch) -
                       loss_data<double>(m, std::span<const double>(tm), batch)) / 2e-6;
    CHECK(rel_err(g[k], fd) < 1e-5);
  }
}

TEST_CASE("stencil regularizer gradient matches central differences") {
  const MlpDensity m(MlpSpec::make({3, 5, 1}, Activation::tanh), 3, 1, 23ull);
  StencilTuple t;
  t.values = normals(7, 9);
  const std::vector<const StencilTuple*> batch{&t};
  const auto theta = std::vector<double>(m.parameters().begin(), m.parameters().end());
  const auto g = parameter_gradient(theta, [&](std::span<const Var> th) { return loss_reg_stencil<Var>(m, th, batch); });
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto tp = theta, tm = theta;
    tp[k] += 1e-6;
    tm[k] -= 1e-6;
    const double fd = (loss_reg_stencil<double>(m, std::span<const double>(tp), batch) -
                       loss_reg_stencil<double>(m, std::span<const double>(tm), batch)) / 2e-6;
    CHECK(rel_err(g[k], fd) < 1e-4);
  }
}

TEST_CASE("gauge modification") {
  const WaveDensity<> w;
  SECTION("zero gauge leaves the density unchanged") {
    auto zero = [](const auto& x) { return x * 0.0; };
    const auto gm = gauge_modify(w, zero, zero, zero);
    const auto x = normals(3, 2);
    CHECK(eval(gm, x) == eval(w, x));
  }
  SECTION("linear gauge changes values but not DEL residuals") {
    auto id = [](const auto& x) { return x; };
    auto zero = [](const auto& x) { return x * 0.0; };
    const auto gm = gauge_modify(w, id, zero, zero);
    const auto x = normals(3, 3);
    CHECK(eval(gm, x) != eval(w, x));
    StencilTuple t;
    t.values = normals(7, 4);
    const auto a = del_residual(w, t);
    const auto b = del_residual(gm, t);
    CHECK(std::abs(a[0] - b[0]) <= 1e-12 * std::max(1.0, std::abs(a[0])));
  }
  SECTION("nonlinear gauge on 100 random tuples") {
    auto s = [](const auto& x) {
      using std::sin;
      return sin(x);
    };
    auto sq = [](const auto& x) { return x * x; };
    auto e = [](const auto& x) {
      using std::exp;
      return exp(x);
    };
    const auto gm = gauge_modify(w, s, sq, e);
    for (int k = 0; k < 100; ++k) {
      StencilTuple t;
      t.values = normals(7, 100 + k);
      const auto a = del_residual(w, t);
      const auto b = del_residual(gm, t);
      CHECK(std::abs(a[0] - b[0]) <= 1e-10 * std::max(1.0, std::abs(a[0])));
    }
  }
  CHECK_THROWS_AS(gauge_modify(SchrodingerDensity{}, [](auto x) { return x; }, [](auto x) { return x; },
                               [](auto x) { return x; }),
                  Error);
}
