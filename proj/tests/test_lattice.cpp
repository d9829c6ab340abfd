#include "catch_amalgamated.hpp"

#include <random>
#include <set>
#include <sstream>

#include "lagfield/io.hpp"
#include "lagfield/lattice.hpp"

using namespace lagfield;
using Catch::Approx;

namespace {

Field random_field(const Grid2D& g, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Field f(g, d);
  for (int i = 0; i < f.times(); ++i)
    for (double& v : f.slice(i)) v = n(rng);
  return f;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_NOTHROW(Grid2D{2, 3, 0.1, 0.1}.validate());
  CHECK_THROWS_AS((Grid2D{1, 3, 0.1, 0.1}.validate()), Error);
  CHECK_THROWS_AS((Grid2D{2, 2, 0.1, 0.1}.validate()), Error);
  CHECK_THROWS_AS((Grid2D{2, 3, 0.0, 0.1}.validate()), Error);
  CHECK_THROWS_AS((Grid2D{2, 3, 0.1, -1.0}.validate()), Error);
}

TEST_CASE("periodic fields store no seam column") {
  Grid2D p{4, 20, 0.1, 0.05};
  CHECK(p.columns() == 20);
  Grid2D d = p;
  d.bc = BoundaryCondition::dirichlet;
  CHECK(d.columns() == 21);
  Field f(p, 2);
  CHECK(f.values().size() == 5u * 20u * 2u);
  CHECK(f.slice_size() == 40);
}

TEST_CASE("spatial wrap") {
  Grid2D g{2, 20, 1, 1};
  CHECK(spatial_wrap(g, 20) == 0);
  CHECK(spatial_wrap(g, -1) == 19);
  Grid2D h{2, 8, 1, 1};
  CHECK(spatial_wrap(h, 17) == 1);
  Grid2D d{2, 8, 1, 1, BoundaryCondition::dirichlet};
  CHECK_THROWS_AS(spatial_wrap(d, 3), Error);
}

TEST_CASE("field rejects non-finite and mis-sized data") {
  Grid2D g{2, 3, 1, 1};
  CHECK_THROWS_AS(Field(g, 1, std::vector<double>(8, 0.0)), Error);
  std::vector<double> v(9, 0.0);
  v[4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Field(g, 1, v), Error);
}

TEST_CASE("tuple counts") {
  Field f(Grid2D{20, 20, 0.025, 0.05}, 1);
  CHECK(extract_stencils(f, StencilKind::pts3_7stencil, 1).size() == 380);
  CHECK(extract_stencils(f, StencilKind::pts3_7stencil, 2).size() == 340);
  CHECK(extract_stencils(f, StencilKind::pts3_7stencil, 2).size() * 80 == 27200);
  CHECK(extract_stencils(f, StencilKind::pts3_7stencil, 1).size() * 80 == 30400);
  Field small(Grid2D{2, 3, 1, 1}, 1);
  CHECK(extract_stencils(small, StencilKind::pts3_7stencil, 1).size() == 3);
  Field s(Grid2D{12, 8, 0.01, 0.125}, 2);
  const auto nine = extract_stencils(s, StencilKind::pts4_9stencil, 1);
  CHECK(nine.size() == 11u * 8u);
  CHECK(nine.front().values.size() == 18);
}

TEST_CASE("seven-point tuple layout") {
  Grid2D g{4, 5, 1, 1};
  Field f(g, 1);
  for (int i = 0; i < f.times(); ++i)
    for (int j = 0; j < g.n_x; ++j) f(i, j) = 10 * i + j;
  const auto ts = extract_stencils(f, StencilKind::pts3_7stencil, 1);
  const auto it = std::find_if(ts.begin(), ts.end(), [](const StencilTuple& t) { return t.i == 2 && t.j == 0; });
  REQUIRE(it != ts.end());
  for (int p = 0; p < 7; ++p) {
    const int di = detail::seven_offsets[p][0], dj = detail::seven_offsets[p][1];
    CHECK(it->values[p] == f.at(2 + di, dj));
  }
}

TEST_CASE("strided extraction equals stride-1 extraction on subsampled fields") {
  const Grid2D g{12, 12, 0.1, 0.1};
  const Field f = random_field(g, 1, 5);
  const int s = 2;
  std::set<std::vector<double>> strided;
  for (const auto& t : extract_stencils(f, StencilKind::pts3_7stencil, s)) strided.insert(t.values);

  std::set<std::vector<double>> sub;
  for (int oi = 0; oi < s; ++oi)
    for (int oj = 0; oj < s; ++oj) {
      const int nt = (g.n_t - oi) / s;
      if (nt < 2) continue;
      Grid2D h{nt, g.n_x / s, g.dt * s, g.dx * s};
      Field c(h, 1);
      for (int i = 0; i <= nt; ++i)
        for (int j = 0; j < h.n_x; ++j) c(i, j) = f(oi + s * i, (oj + s * j) % g.n_x);
      for (const auto& t : extract_stencils(c, StencilKind::pts3_7stencil, 1)) sub.insert(t.values);
    }
  CHECK(strided == sub);
}

TEST_CASE("dirichlet extraction keeps boundary columns fixed") {
  Grid2D g{4, 6, 1, 1, BoundaryCondition::dirichlet};
  Field f(g, 1);
  const auto ts = extract_stencils(f, StencilKind::pts3_7stencil, 1);
  CHECK(ts.size() == 3u * 5u);
  for (const auto& t : ts) {
    CHECK(t.j >= 1);
    CHECK(t.j <= 5);
  }
}

TEST_CASE("chain tuples") {
  std::vector<std::vector<double>> q{{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  const auto ts = chain_stencils(q);
  REQUIRE(ts.size() == 2);
  CHECK(ts[0].values == std::vector<double>{0, 1, 2, 3, 4, 5});
  CHECK(ts[1].dim == 2);
  CHECK_THROWS_AS(chain_stencils({{1.0}, {2.0}}), Error);
}

TEST_CASE("field csv round trip is bit exact") {
  for (int d : {1, 2}) {
    const Field f = random_field(Grid2D{5, 7, 0.013, 1.0 / 3.0}, d, 11 + d);
    std::stringstream ss;
    write_field(ss, f);
    const Field g = read_field(ss);
    CHECK(g.grid() == f.grid());
    CHECK(g.d() == d);
    CHECK(g.values() == f.values());
  }
}

TEST_CASE("field difference metrics") {
  Grid2D g{2, 3, 1, 1};
  Field a(g, 1), b(g, 1);
  CHECK(max_abs_difference(a, b) == 0.0);
  b(1, 2) = 1.0;
  CHECK(max_abs_difference(a, b) == 1.0);
  Field c(g, 2), e(g, 2);
  e(0, 1, 0) = 3.0;
  e(0, 1, 1) = 4.0;
  CHECK(max_modulus_difference(c, e) == Approx(5.0).epsilon(1e-15));
  CHECK(max_abs_difference(c, e) == 4.0);
  CHECK_THROWS_AS(max_abs_difference(a, c), Error);
}
