#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "s3cl/error.hpp"

namespace s3cl {

/// Dense row-major 64-bit matrix. Row-major keeps node rows contiguous, which
/// is the access pattern of every loss in the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw RangeError("dimension mismatch: " + what);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline Matrix relu(const Matrix& pre) { return pre.cwiseMax(0.0); }

/// Backprop through ReLU. The subgradient at exactly zero is zero.
inline Matrix relu_backward(const Matrix& grad_out, const Matrix& pre) {
  return (pre.array() > 0.0).select(grad_out, 0.0);
}

/// Row-wise l2 normalization. Zero rows come back unchanged; `norms` receives
/// each row's original Euclidean norm when non-null.
inline Matrix l2_normalize_rows(const Matrix& m, Vector* norms = nullptr) {
  Matrix out = m;
  if (norms) norms->resize(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (norms) (*norms)(i) = n;
    if (n > 0.0) out.row(i) /= n;
  }
  return out;
}

/// Gradient of l2_normalize_rows. For y = x/|x|, dx = (dy - y (y.dy)) / |x|.
/// Rows whose norm was zero receive a zero gradient.
inline Matrix l2_normalize_rows_backward(const Matrix& grad_out, const Matrix& normalized,
                                         const Vector& norms) {
  Matrix grad_in = Matrix::Zero(grad_out.rows(), grad_out.cols());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    const double n = norms(i);
    if (n <= 0.0) continue;
    const double proj = normalized.row(i).dot(grad_out.row(i));
    grad_in.row(i) = (grad_out.row(i) - proj * normalized.row(i)) / n;
  }
  return grad_in;
}

/// Numerically stable log(sum(exp(v))).
template <typename Range>
double log_sum_exp(const Range& values) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

}  // namespace s3cl
