#ifndef LAGFIELD_LATTICE_HPP
#define LAGFIELD_LATTICE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lagfield/error.hpp"

namespace lagfield {

enum class BoundaryCondition { periodic, dirichlet };

inline const char* to_string(BoundaryCondition bc) {
  return bc == BoundaryCondition::periodic ? "periodic" : "dirichlet";
}

/// Uniform space-time lattice with n_t time steps and n_x spatial cells.
struct Grid2D {
  int n_t = 2;
  int n_x = 3;
  double dt = 1.0;
  double dx = 1.0;
  BoundaryCondition bc = BoundaryCondition::periodic;

  /// Fields produced by short propagations may hold fewer steps than a data grid.
  void validate(int min_steps = 2) const {
    if (!(dt > 0.0) || !(dx > 0.0)) throw Error(ErrorKind::input, "grid spacings must be positive");
    if (n_t < min_steps) throw Error(ErrorKind::input, "grid needs n_t >= " + std::to_string(min_steps));
    if (n_x < 3) throw Error(ErrorKind::input, "grid needs n_x >= 3");
  }

  bool periodic() const { return bc == BoundaryCondition::periodic; }

  /// Stored columns per time slice: n_x when periodic (no seam column), n_x + 1 otherwise.
  int columns() const { return periodic() ? n_x : n_x + 1; }

  /// Spatial period b = n_x dx (periodic grids).
  double length() const { return n_x * dx; }

  bool operator==(const Grid2D&) const = default;
};

inline int spatial_wrap(const Grid2D& grid, int j) {
  if (!grid.periodic()) throw Error(ErrorKind::misuse, "spatial_wrap on a dirichlet grid");
  const int r = j % grid.n_x;
  return r < 0 ? r + grid.n_x : r;
}

/// Samples over a Grid2D with d components per node, stored as [i][j][k].
class Field {
 public:
  Field() = default;
  Field(const Grid2D& grid, int d) : grid_(grid), d_(d) {
    grid.validate(1);
    if (d < 1) throw Error(ErrorKind::input, "field needs d >= 1");
    values_.assign(static_cast<std::size_t>((grid.n_t + 1) * grid.columns() * d), 0.0);
  }
  Field(const Grid2D& grid, int d, std::vector<double> values) : Field(grid, d) {
    if (values.size() != values_.size()) throw Error(ErrorKind::shape, "field value count does not match grid");
    for (double v : values)
      if (!std::isfinite(v)) throw Error(ErrorKind::input, "field values must be finite");
    values_ = std::move(values);
  }

  const Grid2D& grid() const { return grid_; }
  int d() const { return d_; }
  int times() const { return grid_.n_t + 1; }
  int columns() const { return grid_.columns(); }
  int slice_size() const { return columns() * d_; }

  double& operator()(int i, int j, int k = 0) { return values_[index(i, j, k)]; }
  double operator()(int i, int j, int k = 0) const { return values_[index(i, j, k)]; }

  /// Component k at (i, j) with periodic wrap applied to j.
  double at(int i, int j, int k = 0) const {
    if (grid_.periodic()) j = spatial_wrap(grid_, j);
    return (*this)(i, j, k);
  }

  std::span<double> slice(int i) {
    return {values_.data() + static_cast<std::size_t>(i * slice_size()), static_cast<std::size_t>(slice_size())};
  }
  std::span<const double> slice(int i) const {
    return {values_.data() + static_cast<std::size_t>(i * slice_size()), static_cast<std::size_t>(slice_size())};
  }

  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>((i * grid_.columns() + j) * d_ + k);
  }

  Grid2D grid_;
  int d_ = 1;
  std::vector<double> values_;
};

enum class StencilKind { pts3_7stencil, pts4_9stencil, pts2_3stencil };

/// Number of stencil points in a tuple.
inline int tuple_points(StencilKind kind) {
  switch (kind) {
    case StencilKind::pts3_7stencil: return 7;
    case StencilKind::pts4_9stencil: return 9;
    case StencilKind::pts2_3stencil: return 3;
  }
  return 0;
}

/// Number of arguments of the density the stencil belongs to.
inline int stencil_arity(StencilKind kind) {
  switch (kind) {
    case StencilKind::pts3_7stencil: return 3;
    case StencilKind::pts4_9stencil: return 4;
    case StencilKind::pts2_3stencil: return 2;
  }
  return 0;
}

/// Lattice values around one vertex. For the 7-point kind the order is
/// (u[i][j], u[i+1][j], u[i][j+1], u[i-1][j], u[i-1][j+1], u[i][j-1], u[i+1][j-1]);
/// the 9-point kind is row-major over offsets (di, dj) in {-1,0,1}², centre at 4;
/// the 3-point chain is (q[i-1], q[i], q[i+1]) with whole slices as points.
struct StencilTuple {
  StencilKind kind = StencilKind::pts3_7stencil;
  int dim = 1;  // components per point
  int stride = 1;
  int trajectory = 0;
  int i = 0;
  int j = 0;
  std::vector<double> values;

  std::span<const double> point(int p) const {
    return {values.data() + static_cast<std::size_t>(p * dim), static_cast<std::size_t>(dim)};
  }
};

inline int nine_index(int di, int dj) { return (di + 1) * 3 + (dj + 1); }

namespace detail {

inline const int seven_offsets[7][2] = {{0, 0}, {1, 0}, {0, 1}, {-1, 0}, {-1, 1}, {0, -1}, {1, -1}};

}  // namespace detail

/// Interior vertex ranges for a stencil of half-width `stride`.
struct VertexRange {
  int i_begin, i_end;  // inclusive
  int j_begin, j_end;  // inclusive
};

inline VertexRange interior_vertices(const Grid2D& grid, StencilKind kind, int stride) {
  if (stride < 1) throw Error(ErrorKind::input, "stride must be >= 1");
  VertexRange r{stride, grid.n_t - stride, 0, 0};
  if (kind == StencilKind::pts2_3stencil) {
    r.j_begin = 0;
    r.j_end = 0;
  } else if (grid.periodic()) {
    r.j_begin = 0;
    r.j_end = grid.n_x - 1;
  } else {
    r.j_begin = stride;
    r.j_end = grid.n_x - stride;
  }
  if (r.i_end < r.i_begin || r.j_end < r.j_begin) {
    throw Error(ErrorKind::sizing, "grid too small for the stencil at stride " + std::to_string(stride));
  }
  return r;
}

inline std::vector<StencilTuple> extract_stencils(const Field& field, StencilKind kind, int stride,
                                                  int trajectory = 0) {
  const Grid2D& g = field.grid();
  const VertexRange r = interior_vertices(g, kind, stride);
  const int d = field.d();
  std::vector<StencilTuple> out;
  out.reserve(static_cast<std::size_t>((r.i_end - r.i_begin + 1) * (r.j_end - r.j_begin + 1)));
  const int s = stride;
  for (int i = r.i_begin; i <= r.i_end; ++i) {
    for (int j = r.j_begin; j <= r.j_end; ++j) {
      StencilTuple t;
      t.kind = kind;
      t.stride = stride;
      t.trajectory = trajectory;
      t.i = i;
      t.j = j;
      auto push = [&](int ii, int jj) {
        for (int k = 0; k < d; ++k) t.values.push_back(field.at(ii, jj, k));
      };
      switch (kind) {
        case StencilKind::pts3_7stencil:
          t.dim = d;
          for (const auto& o : detail::seven_offsets) push(i + s * o[0], j + s * o[1]);
          break;
        case StencilKind::pts4_9stencil:
          t.dim = d;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) push(i + s * di, j + s * dj);
          break;
        case StencilKind::pts2_3stencil:
          t.dim = field.slice_size();
          for (int di = -1; di <= 1; ++di) {
            auto sl = field.slice(i + s * di);
            t.values.insert(t.values.end(), sl.begin(), sl.end());
          }
          break;
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

/// 3-point chain tuples from a sequence of latent states.
inline std::vector<StencilTuple> chain_stencils(const std::vector<std::vector<double>>& states,
                                                int trajectory = 0) {
  if (states.size() < 3) throw Error(ErrorKind::sizing, "a chain needs at least three states");
  std::vector<StencilTuple> out;
  for (std::size_t i = 1; i + 1 < states.size(); ++i) {
    StencilTuple t;
    t.kind = StencilKind::pts2_3stencil;
    t.dim = static_cast<int>(states[i].size());
    t.trajectory = trajectory;
    t.i = static_cast<int>(i);
    for (int di = -1; di <= 1; ++di) {
      const auto& q = states[i + di];
      t.values.insert(t.values.end(), q.begin(), q.end());
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Field comparison

inline void check_same_shape(const Field& a, const Field& b) {
  if (a.values().size() != b.values().size() || a.d() != b.d() || a.columns() != b.columns()) {
    throw Error(ErrorKind::shape, "fields differ in shape");
  }
}

/// max over nodes and components of |a − b|.
inline double max_abs_difference(const Field& a, const Field& b) {
  check_same_shape(a, b);
  double e = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) e = std::max(e, std::abs(a.values()[k] - b.values()[k]));
  return e;
}

/// max over nodes of |a − b| in ℂ, reading component pairs as (re, im).
inline double max_modulus_difference(const Field& a, const Field& b) {
  check_same_shape(a, b);
  if (a.d() != 2) throw Error(ErrorKind::shape, "complex modulus needs d = 2");
  double e = 0.0;
  for (std::size_t k = 0; k < a.values().size(); k += 2)
    e = std::max(e, std::hypot(a.values()[k] - b.values()[k], a.values()[k + 1] - b.values()[k + 1]));
  return e;
}

}  // namespace lagfield

#endif  // LAGFIELD_LATTICE_HPP
