#ifndef LAGFIELD_MODEL_HPP
#define LAGFIELD_MODEL_HPP

#include <string>
#include <utility>
#include <variant>

#include "lagfield/density.hpp"
#include "lagfield/error.hpp"
#include "lagfield/theories.hpp"

namespace lagfield {

/// Any density the tools can load, train or simulate.
using DensityModel = std::variant<MlpDensity, WaveDensity<>, SchrodingerDensity>;

inline std::string model_kind(const DensityModel& m) {
  switch (m.index()) {
    case 0: return "mlp";
    case 1: return "wave";
    default: return "schrodinger";
  }
}

inline int model_arity(const DensityModel& m) {
  return std::visit([](const auto& d) { return d.arity(); }, m);
}

inline int model_components(const DensityModel& m) {
  return std::visit([](const auto& d) { return d.components(); }, m);
}

/// Reference density for a theory name on a mesh with spacings dt, dx.
inline DensityModel reference_model(const std::string& theory, double dt, double dx) {
  if (theory == "wave") return WaveDensity<>(WaveParams<>{dt, dx});
  if (theory == "schrodinger") {
    SchrodingerParams p;
    p.dt = dt;
    p.dx = dx;
    return SchrodingerDensity(p);
  }
  throw Error(ErrorKind::input, "unknown theory '" + theory + "'");
}

}  // namespace lagfield

#endif  // LAGFIELD_MODEL_HPP
