#ifndef LAGFIELD_ERROR_HPP
#define LAGFIELD_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lagfield {

/// Machine-readable error categories. The CLI maps each one to its own exit code.
enum class ErrorKind {
  shape,
  sizing,
  misuse,
  conditioning,
  non_convergence,
  capability,
  input,
  no_real_solution,
  degenerate_mesh,
  non_finite,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::sizing: return "sizing";
    case ErrorKind::misuse: return "misuse";
    case ErrorKind::conditioning: return "conditioning";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::capability: return "capability";
    case ErrorKind::input: return "input";
    case ErrorKind::no_real_solution: return "no_real_solution";
    case ErrorKind::degenerate_mesh: return "degenerate_mesh";
    case ErrorKind::non_finite: return "non_finite";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

inline int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A Jacobian or mixed Hessian block was numerically singular.
class ConditioningError : public Error {
 public:
  ConditioningError(const std::string& what, double sigma_min)
      : Error(ErrorKind::conditioning, what), sigma_min_(sigma_min) {}

  double sigma_min() const noexcept { return sigma_min_; }

 private:
  double sigma_min_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(ErrorKind::non_convergence, what), residuals_(std::move(residuals)) {}

  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// Training hit a non-finite loss or gradient. Carries the last finite parameters.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, int epoch, int batch,
                 std::vector<double> last_good)
      : Error(ErrorKind::non_finite, what),
        epoch_(epoch),
        batch_(batch),
        last_good_(std::move(last_good)) {}

  int epoch() const noexcept { return epoch_; }
  int batch() const noexcept { return batch_; }
  const std::vector<double>& last_good() const noexcept { return last_good_; }

 private:
  int epoch_;
  int batch_;
  std::vector<double> last_good_;
};

}  // namespace lagfield

#endif  // LAGFIELD_ERROR_HPP
