// SPDX-License-Identifier: Apache-2.0
/**
 * @file   numkernel.hpp
 * @brief  Dense numeric primitives: vectors, matrices, softmax, Glorot
 *         initialization and a central finite-difference gradient estimator.
 *
 * Storage is Eigen. Weight matrices are row-major (the serialized layout);
 * per-timestep activations are column-major with one column per step.
 */
#pragma once

#include "comprnn/error.hpp"
#include "comprnn/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <string>

namespace comprnn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Sequence of column vectors, one column per timestep.
using SeqMat = Eigen::MatrixXd;

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived> &x) {
  return x.allFinite();
}

template <class Derived>
void require_finite(const Eigen::DenseBase<Derived> &x, const char *what) {
  if (!x.allFinite())
    throw NonFiniteError(std::string(what) + ": non-finite value");
}

/// out = w * x, with dimension and finiteness checks.
inline Vec matvec(const Mat &w, const Vec &x) {
  if (w.cols() != x.size())
    throw DimensionError("matvec: matrix " + shape_str(w.rows(), w.cols()) +
                         " incompatible with vector of length " +
                         std::to_string(x.size()));
  Vec out = w * x;
  require_finite(out, "matvec");
  return out;
}

/// Max-shifted softmax. Rejects empty or non-finite input.
inline Vec softmax(const Vec &v) {
  if (v.size() == 0)
    throw DimensionError("softmax: empty vector");
  require_finite(v, "softmax input");
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Glorot bound sqrt(6 / (rows + cols)).
inline double glorot_bound(Eigen::Index rows, Eigen::Index cols) {
  return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

/// Entries i.i.d. uniform in [-b, b) with the Glorot bound b, drawn in
/// row-major order.
inline Mat init_uniform(Rng &rng, Eigen::Index rows, Eigen::Index cols) {
  if (rows < 1 || cols < 1)
    throw DimensionError("init_uniform: invalid shape " + shape_str(rows, cols));
  const double b = glorot_bound(rows, cols);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = (2.0 * rng.uniform01() - 1.0) * b;
  return m;
}

/// Central differences: out[i] = (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Vec finite_diff(const std::function<double(const Vec &)> &f, const Vec &x,
                       double h) {
  if (!(h > 0.0))
    throw Error("finite_diff: step must be positive");
  Vec probe = x;
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteError("finite_diff: non-finite evaluation at coordinate " +
                           std::to_string(i));
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

} // namespace comprnn
