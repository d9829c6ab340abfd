#ifndef LAGFIELD_LINALG_HPP
#define LAGFIELD_LINALG_HPP

// Small dense matrices over any scalar type (double, ad::Var, duals), with a
// Cholesky factorization generic enough to be differentiated through.

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "lagfield/dual.hpp"
#include "lagfield/error.hpp"

namespace lagfield {

template <class T>
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), T(0.0)) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i * cols_ + j)]; }
  const T& operator()(int i, int j) const { return data_[static_cast<std::size_t>(i * cols_ + j)]; }

  const std::vector<T>& data() const { return data_; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

inline Eigen::MatrixXd to_eigen(const Mat<double>& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline Mat<double> from_eigen(const Eigen::MatrixXd& e) {
  Mat<double> m(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = e(i, j);
  return m;
}

/// AᵀA
template <class T>
Mat<T> gram(const Mat<T>& a) {
  const int n = a.cols();
  Mat<T> g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      T s(0.0);
      for (int k = 0; k < a.rows(); ++k) {
        if (primal(a(k, i)) == 0.0 && primal(a(k, j)) == 0.0) continue;
        s = s + a(k, i) * a(k, j);
      }
      g(i, j) = s;
      g(j, i) = s;
    }
  }
  return g;
}

/// Lower-triangular Cholesky factor. Returns false when a pivot is not
/// strictly positive and finite.
template <class T>
bool cholesky(const Mat<T>& m, Mat<T>& l) {
  using std::sqrt;
  const int n = m.rows();
  l = Mat<T>(n, n);
  for (int j = 0; j < n; ++j) {
    T s = m(j, j);
    for (int k = 0; k < j; ++k) s = s - l(j, k) * l(j, k);
    const double p = primal(s);
    if (!(p > 0.0) || !std::isfinite(p)) return false;
    l(j, j) = sqrt(s);
    for (int i = j + 1; i < n; ++i) {
      T t = m(i, j);
      for (int k = 0; k < j; ++k) t = t - l(i, k) * l(j, k);
      l(i, j) = t / l(j, j);
    }
  }
  return true;
}

/// Solves (L Lᵀ) x = b.
template <class T>
std::vector<T> cholesky_solve(const Mat<T>& l, const std::vector<T>& b) {
  const int n = l.rows();
  std::vector<T> y(b);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < i; ++k) y[i] = y[i] - l(i, k) * y[k];
    y[i] = y[i] / l(i, i);
  }
  for (int i = n - 1; i >= 0; --i) {
    for (int k = i + 1; k < n; ++k) y[i] = y[i] - l(k, i) * y[k];
    y[i] = y[i] / l(i, i);
  }
  return y;
}

/// Deterministic, non-degenerate start vector for inverse iteration.
inline std::vector<double> inverse_iteration_start(int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  double norm = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = 1.0 + 0.5 * std::sin(1.7 * (i + 1) + 0.3 * (i + 1) * (i + 1));
    norm += v[i] * v[i];
  }
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

struct SigmaMin {
  bool ok = false;
  int iterations = 0;
};

/// Smallest singular value of `a` by inverse vector iteration on AᵀA, with the
/// Cholesky factor computed once. Returns 0 and sets status.ok = false when the
/// factorization fails.
template <class T>
T smallest_singular_value(const Mat<T>& a, int iters, SigmaMin* status = nullptr) {
  using std::sqrt;
  if (iters < 1) throw Error(ErrorKind::misuse, "smallest_singular_value needs iters >= 1");
  if (a.rows() != a.cols()) throw Error(ErrorKind::shape, "smallest_singular_value needs a square matrix");
  const int n = a.cols();
  Mat<T> l;
  if (!cholesky(gram(a), l)) {
    if (status) *status = {false, 0};
    return T(0.0);
  }
  const std::vector<double> start = inverse_iteration_start(n);
  std::vector<T> v(start.begin(), start.end());
  T sigma2(0.0);
  for (int it = 0; it < iters; ++it) {
    std::vector<T> w = cholesky_solve(l, v);
    T wv(0.0), ww(0.0);
    for (int i = 0; i < n; ++i) {
      wv = wv + w[i] * v[i];
      ww = ww + w[i] * w[i];
    }
    sigma2 = T(1.0) / wv;
    const T inv_norm = T(1.0) / sqrt(ww);
    for (int i = 0; i < n; ++i) v[i] = w[i] * inv_norm;
  }
  if (status) *status = {true, iters};
  return sqrt(sigma2);
}

/// Exact smallest singular value from a dense SVD.
inline double smallest_singular_value_svd(const Mat<double>& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(a));
  return svd.singularValues().minCoeff();
}

}  // namespace lagfield

#endif  // LAGFIELD_LINALG_HPP
