#ifndef LAGFIELD_IO_HPP
#define LAGFIELD_IO_HPP

// Plain-text formats: fields, checkpoints, profiles, PCA bases, loss history.
// Every number is written with 17 significant digits so files round-trip.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lagfield/error.hpp"
#include "lagfield/lattice.hpp"
#include "lagfield/model.hpp"
#include "lagfield/rom.hpp"
#include "lagfield/solver.hpp"
#include "lagfield/training.hpp"
#include "lagfield/tw_locator.hpp"

namespace lagfield {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string next_line(std::istream& in, const char* what) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return line;
  }
  throw Error(ErrorKind::io, std::string("unexpected end of file reading ") + what);
}

inline std::vector<double> parse_row(const std::string& line, char sep) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) {
    if (cell.empty() || cell == " ") continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      throw Error(ErrorKind::io, "not a number: '" + cell + "'");
    }
    v.push_back(x);
  }
  return v;
}

/// Reads "key value..." and checks the key.
inline std::istringstream keyed(std::istream& in, const std::string& key) {
  std::istringstream ss(next_line(in, key.c_str()));
  std::string k;
  ss >> k;
  if (k != key) throw Error(ErrorKind::io, "expected '" + key + "', found '" + k + "'");
  return ss;
}

template <class T>
T keyed_value(std::istream& in, const std::string& key) {
  auto ss = keyed(in, key);
  T v{};
  if (!(ss >> v)) throw Error(ErrorKind::io, "bad value for '" + key + "'");
  return v;
}

inline std::vector<double> read_numbers(std::istream& in, std::size_t n, const char* what) {
  std::vector<double> v;
  v.reserve(n);
  std::string tok;
  while (v.size() < n && in >> tok) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw Error(ErrorKind::io, std::string("not a number in ") + what + ": '" + tok + "'");
    }
  }
  if (v.size() != n) throw Error(ErrorKind::io, std::string("too few values in ") + what);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fields: "# grid nt nx dt dx bc d", then one comma-separated row per time.

inline void write_field(std::ostream& out, const Field& f) {
  const Grid2D& g = f.grid();
  out << "# grid " << g.n_t << ' ' << g.n_x << ' ' << fmt17(g.dt) << ' ' << fmt17(g.dx) << ' ' << to_string(g.bc)
      << ' ' << f.d() << '\n';
  for (int i = 0; i < f.times(); ++i) {
    const auto s = f.slice(i);
    for (std::size_t k = 0; k < s.size(); ++k) out << (k ? "," : "") << fmt17(s[k]);
    out << '\n';
  }
}

inline Field read_field(std::istream& in) {
  std::istringstream h(detail::next_line(in, "field header"));
  std::string hash, word, bc;
  Grid2D g;
  int d = 0;
  if (!(h >> hash >> word >> g.n_t >> g.n_x >> g.dt >> g.dx >> bc >> d) || hash != "#" || word != "grid") {
    throw Error(ErrorKind::io, "bad field header");
  }
  if (bc == "periodic") g.bc = BoundaryCondition::periodic;
  else if (bc == "dirichlet") g.bc = BoundaryCondition::dirichlet;
  else throw Error(ErrorKind::io, "unknown boundary condition '" + bc + "'");
  g.validate(1);
  std::vector<double> values;
  for (int i = 0; i <= g.n_t; ++i) {
    const auto row = detail::parse_row(detail::next_line(in, "field row"), ',');
    if (static_cast<int>(row.size()) != g.columns() * d) {
      throw Error(ErrorKind::io, "field row " + std::to_string(i) + " has " + std::to_string(row.size()) + " values");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return Field(g, d, std::move(values));
}

// ---------------------------------------------------------------------------
// Model checkpoints

inline void write_checkpoint(std::ostream& out, const DensityModel& model) {
  out << "# lagfield checkpoint 1\n";
  out << "kind " << model_kind(model) << '\n';
  if (const auto* m = std::get_if<MlpDensity>(&model)) {
    const MlpSpec& s = m->spec();
    out << "arity " << m->arity() << '\n' << "components " << m->components() << '\n';
    out << "widths";
    for (int w : s.widths) out << ' ' << w;
    out << '\n' << "activation " << to_string(s.activation) << '\n' << "bias";
    for (bool b : s.bias) out << ' ' << (b ? 1 : 0);
    out << '\n' << "params " << m->parameters().size() << '\n';
    for (double v : m->parameters()) out << fmt17(v) << '\n';
  } else if (const auto* w = std::get_if<WaveDensity<>>(&model)) {
    out << "dt " << fmt17(w->params().dt) << '\n' << "dx " << fmt17(w->params().dx) << '\n';
  } else {
    const auto& p = std::get<SchrodingerDensity>(model).params();
    out << "dt " << fmt17(p.dt) << '\n' << "dx " << fmt17(p.dx) << '\n' << "hbar " << fmt17(p.hbar) << '\n'
        << "beta " << fmt17(p.potential.beta) << '\n';
  }
}

inline DensityModel read_checkpoint(std::istream& in) {
  if (detail::next_line(in, "checkpoint header").rfind("# lagfield checkpoint 1", 0) != 0) {
    throw Error(ErrorKind::io, "not a checkpoint file");
  }
  const auto kind = detail::keyed_value<std::string>(in, "kind");
  if (kind == "mlp") {
    const int arity = detail::keyed_value<int>(in, "arity");
    const int comps = detail::keyed_value<int>(in, "components");
    MlpSpec s;
    {
      auto ss = detail::keyed(in, "widths");
      int w;
      while (ss >> w) s.widths.push_back(w);
    }
    s.activation = activation_from_string(detail::keyed_value<std::string>(in, "activation"));
    {
      auto ss = detail::keyed(in, "bias");
      int b;
      while (ss >> b) s.bias.push_back(b != 0);
    }
    const auto n = detail::keyed_value<std::size_t>(in, "params");
    return MlpDensity(s, arity, comps, detail::read_numbers(in, n, "checkpoint parameters"));
  }
  if (kind == "wave") {
    WaveParams<> p;
    p.dt = detail::keyed_value<double>(in, "dt");
    p.dx = detail::keyed_value<double>(in, "dx");
    return WaveDensity<>(p);
  }
  if (kind == "schrodinger") {
    SchrodingerParams p;
    p.dt = detail::keyed_value<double>(in, "dt");
    p.dx = detail::keyed_value<double>(in, "dx");
    p.hbar = detail::keyed_value<double>(in, "hbar");
    p.potential.beta = detail::keyed_value<double>(in, "beta");
    return SchrodingerDensity(p);
  }
  throw Error(ErrorKind::io, "unknown model kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Travelling-wave profiles

inline void write_profile(std::ostream& out, const WaveProfile& p) {
  out << "# lagfield profile 1\n";
  out << "b " << fmt17(p.b) << '\n' << "c " << fmt17(p.c) << '\n' << "d " << p.d << '\n' << "modes " << p.modes << '\n';
  out << "coef";
  for (double v : p.coef) out << ' ' << fmt17(v);
  out << '\n';
}

inline WaveProfile read_profile(std::istream& in) {
  if (detail::next_line(in, "profile header").rfind("# lagfield profile 1", 0) != 0) {
    throw Error(ErrorKind::io, "not a profile file");
  }
  const double b = detail::keyed_value<double>(in, "b");
  const double c = detail::keyed_value<double>(in, "c");
  const int d = detail::keyed_value<int>(in, "d");
  const int modes = detail::keyed_value<int>(in, "modes");
  WaveProfile p(b, c, d, modes);
  auto ss = detail::keyed(in, "coef");
  p.coef = detail::read_numbers(ss, p.coef.size(), "profile coefficients");
  return p;
}

// ---------------------------------------------------------------------------
// PCA basis: header, one row per basis row, then the mean.

inline void write_pca(std::ostream& out, const PcaMap& map) {
  out << "# lagfield pca 1\n" << "shape " << map.dim() << ' ' << map.reduced() << '\n';
  for (int r = 0; r < map.dim(); ++r) {
    for (int c = 0; c < map.reduced(); ++c) out << (c ? " " : "") << fmt17(map.basis(r, c));
    out << '\n';
  }
  out << "mean";
  for (int r = 0; r < map.dim(); ++r) out << ' ' << fmt17(map.mean(r));
  out << '\n';
}

inline PcaMap read_pca(std::istream& in) {
  if (detail::next_line(in, "pca header").rfind("# lagfield pca 1", 0) != 0) throw Error(ErrorKind::io, "not a pca file");
  auto ss = detail::keyed(in, "shape");
  int rows = 0, cols = 0;
  if (!(ss >> rows >> cols) || rows < 1 || cols < 1) throw Error(ErrorKind::io, "bad pca shape");
  PcaMap map;
  map.basis.resize(rows, cols);
  const auto v = detail::read_numbers(in, static_cast<std::size_t>(rows * cols), "pca basis");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) map.basis(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  auto ms = detail::keyed(in, "mean");
  const auto mean = detail::read_numbers(ms, static_cast<std::size_t>(rows), "pca mean");
  map.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), rows);
  map.rank = cols;
  return map;
}

// ---------------------------------------------------------------------------
// CSV reports

inline void write_loss_history(std::ostream& out, const TrainRun& run) {
  out << "epoch,l_data,l_reg,wall\n";
  out << 0 << ',' << fmt17(run.initial.l_data) << ',' << fmt17(run.initial.l_reg) << ",0\n";
  for (const EpochRecord& r : run.history)
    out << r.epoch << ',' << fmt17(r.l_data) << ',' << fmt17(r.l_reg) << ',' << fmt17(r.wall) << '\n';
}

inline void write_convergence(std::ostream& out, const std::vector<ConvergenceReport>& reports) {
  out << "step,iterations,final_residual,rho_star\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    out << k + 1 << ',' << r.iterations << ',' << fmt17(r.residuals.empty() ? 0.0 : r.residuals.back()) << ','
        << fmt17(r.rho_star) << '\n';
  }
}

template <class T, class Writer>
void save(const std::string& path, const T& value, Writer&& w) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  w(out, value);
  if (!out) throw Error(ErrorKind::io, "write failed for " + path);
}

template <class Reader>
auto load(const std::string& path, Reader&& r) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return r(in);
}

}  // namespace lagfield

#endif  // LAGFIELD_IO_HPP
