#ifndef LAGFIELD_AD_HPP
#define LAGFIELD_AD_HPP

// Tape-based reverse-mode differentiation of scalar programs.
//
// A Var is a value plus a node index on the thread's active tape. Constants
// (index -1) never touch the tape, so mixing parameters with fixed data only
// records the operations that actually depend on parameters.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "lagfield/error.hpp"

namespace lagfield::ad {

class Tape {
 public:
  struct Edge {
    std::int32_t parent;
    double partial;
  };

  Tape() { start_.push_back(0); }

  std::int32_t new_variable() {
    start_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return static_cast<std::int32_t>(start_.size()) - 2;
  }

  void push_edge(std::int32_t parent, double partial) {
    if (parent >= 0 && partial != 0.0) edges_.push_back({parent, partial});
  }

  /// Closes the node whose edges were pushed since the previous node.
  /// Returns -1 when no edge was recorded (the result is a constant).
  std::int32_t finish_node() {
    if (edges_.size() == start_.back()) return -1;
    start_.push_back(static_cast<std::uint32_t>(edges_.size()));
    return static_cast<std::int32_t>(start_.size()) - 2;
  }

  std::size_t size() const { return start_.size() - 1; }

  void backward(std::int32_t output) {
    adjoint_.assign(size(), 0.0);
    if (output < 0) return;
    adjoint_[static_cast<std::size_t>(output)] = 1.0;
    for (std::int32_t i = output; i >= 0; --i) {
      const double a = adjoint_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const std::uint32_t lo = start_[static_cast<std::size_t>(i)];
      const std::uint32_t hi = start_[static_cast<std::size_t>(i) + 1];
      for (std::uint32_t e = lo; e < hi; ++e) {
        adjoint_[static_cast<std::size_t>(edges_[e].parent)] += edges_[e].partial * a;
      }
    }
  }

  double adjoint(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= adjoint_.size()) return 0.0;
    return adjoint_[static_cast<std::size_t>(id)];
  }

  void clear() {
    start_.resize(1);
    edges_.clear();
    adjoint_.clear();
  }

 private:
  std::vector<std::uint32_t> start_;
  std::vector<Edge> edges_;
  std::vector<double> adjoint_;
};

inline thread_local Tape* active_tape = nullptr;

inline Tape& tape() {
  if (active_tape == nullptr) {
    throw Error(ErrorKind::misuse, "reverse-mode operation without an active tape");
  }
  return *active_tape;
}

/// Activates a fresh tape for the current thread for the scope's lifetime.
class TapeScope {
 public:
  TapeScope() : previous_(active_tape) { active_tape = &tape_; }
  ~TapeScope() { active_tape = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

  Tape& get() { return tape_; }

 private:
  Tape tape_;
  Tape* previous_;
};

class Var {
 public:
  Var() = default;
  Var(double value) : value_(value) {}  // NOLINT: constants convert implicitly

  static Var independent(double value) { return Var(value, tape().new_variable()); }
  static Var from_node(double value, std::int32_t id) { return Var(value, id); }

  double value() const { return value_; }
  std::int32_t id() const { return id_; }
  bool is_constant() const { return id_ < 0; }

  Var& operator+=(const Var& o) { return *this = *this + o; }
  Var& operator-=(const Var& o) { return *this = *this - o; }
  Var& operator*=(const Var& o) { return *this = *this * o; }
  Var& operator/=(const Var& o) { return *this = *this / o; }

  friend Var unary(double value, const Var& x, double dx) {
    if (x.id_ < 0) return Var(value);
    Tape& t = tape();
    t.push_edge(x.id_, dx);
    return Var(value, t.finish_node());
  }

  friend Var binary(double value, const Var& x, double dx, const Var& y, double dy) {
    if (x.id_ < 0 && y.id_ < 0) return Var(value);
    Tape& t = tape();
    t.push_edge(x.id_, dx);
    t.push_edge(y.id_, dy);
    return Var(value, t.finish_node());
  }

  friend Var operator+(const Var& x, const Var& y) {
    return binary(x.value_ + y.value_, x, 1.0, y, 1.0);
  }
  friend Var operator-(const Var& x, const Var& y) {
    return binary(x.value_ - y.value_, x, 1.0, y, -1.0);
  }
  friend Var operator*(const Var& x, const Var& y) {
    return binary(x.value_ * y.value_, x, y.value_, y, x.value_);
  }
  friend Var operator/(const Var& x, const Var& y) {
    const double inv = 1.0 / y.value_;
    return binary(x.value_ * inv, x, inv, y, -x.value_ * inv * inv);
  }
  friend Var operator-(const Var& x) { return unary(-x.value_, x, -1.0); }
  friend Var operator+(const Var& x) { return x; }

  friend bool operator<(const Var& x, const Var& y) { return x.value_ < y.value_; }
  friend bool operator>(const Var& x, const Var& y) { return x.value_ > y.value_; }
  friend bool operator<=(const Var& x, const Var& y) { return x.value_ <= y.value_; }
  friend bool operator>=(const Var& x, const Var& y) { return x.value_ >= y.value_; }

 private:
  Var(double value, std::int32_t id) : value_(value), id_(id) {}

  double value_ = 0.0;
  std::int32_t id_ = -1;
};

inline Var sin(const Var& x) { return unary(std::sin(x.value()), x, std::cos(x.value())); }
inline Var cos(const Var& x) { return unary(std::cos(x.value()), x, -std::sin(x.value())); }
inline Var exp(const Var& x) {
  const double e = std::exp(x.value());
  return unary(e, x, e);
}
inline Var log(const Var& x) { return unary(std::log(x.value()), x, 1.0 / x.value()); }
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.value());
  return unary(s, x, 0.5 / s);
}
inline Var tanh(const Var& x) {
  const double t = std::tanh(x.value());
  return unary(t, x, 1.0 - t * t);
}
inline Var atan(const Var& x) {
  return unary(std::atan(x.value()), x, 1.0 / (1.0 + x.value() * x.value()));
}
inline Var abs(const Var& x) {
  return unary(std::abs(x.value()), x, x.value() < 0.0 ? -1.0 : 1.0);
}
inline Var max(const Var& x, const Var& y) {
  return x.value() >= y.value() ? binary(x.value(), x, 1.0, y, 0.0)
                                : binary(y.value(), x, 0.0, y, 1.0);
}
inline Var min(const Var& x, const Var& y) {
  return x.value() <= y.value() ? binary(x.value(), x, 1.0, y, 0.0)
                                : binary(y.value(), x, 0.0, y, 1.0);
}

/// Dot product recorded as a single n-ary node; `bias` is added to the result.
inline Var dot(const Var* w, const Var* x, std::size_t n, const Var& bias) {
  double value = bias.value();
  bool any = !bias.is_constant();
  for (std::size_t k = 0; k < n; ++k) {
    value += w[k].value() * x[k].value();
    any = any || !w[k].is_constant() || !x[k].is_constant();
  }
  if (!any) return Var(value);
  Tape& t = tape();
  for (std::size_t k = 0; k < n; ++k) {
    t.push_edge(w[k].id(), x[k].value());
    t.push_edge(x[k].id(), w[k].value());
  }
  t.push_edge(bias.id(), 1.0);
  return Var::from_node(value, t.finish_node());
}

/// Gradient of `y` with respect to `xs` after a backward sweep on the active tape.
inline std::vector<double> gradient(const Var& y, std::span<const Var> xs) {
  Tape& t = tape();
  t.backward(y.id());
  std::vector<double> g(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) g[k] = t.adjoint(xs[k].id());
  return g;
}

}  // namespace lagfield::ad

#endif  // LAGFIELD_AD_HPP
