// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gru.hpp
 * @brief  Gated Recurrent Unit layer: single step, sequence forward and
 *         backpropagation through time.
 *
 *   z  = sigmoid(W_z x + U_z h_prev + b_z)
 *   r  = sigmoid(W_r x + U_r h_prev + b_r)
 *   hc = tanh(W_h x + U_h (r * h_prev) + b_h)
 *   h  = (1 - z) * h_prev + z * hc
 *
 * The three gates are stored stacked in row blocks [z; r; h] of W (3H x in),
 * U (3H x H) and b (3H).
 */
#pragma once

#include "comprnn/numkernel.hpp"

namespace comprnn {

enum class Gate : int { update = 0, reset = 1, candidate = 2 };

struct GruLayerParams {
  Mat W; ///< 3H x in
  Mat U; ///< 3H x H
  Vec b; ///< 3H

  GruLayerParams() = default;
  GruLayerParams(Eigen::Index in_dim, Eigen::Index hidden)
      : W(Mat::Zero(3 * hidden, in_dim)), U(Mat::Zero(3 * hidden, hidden)),
        b(Vec::Zero(3 * hidden)) {}

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index in_dim() const { return W.cols(); }

  auto W_gate(Gate g) { return W.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto W_gate(Gate g) const { return W.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto U_gate(Gate g) { return U.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto U_gate(Gate g) const { return U.middleRows(static_cast<int>(g) * hidden(), hidden()); }
  auto b_gate(Gate g) { return b.segment(static_cast<int>(g) * hidden(), hidden()); }
  auto b_gate(Gate g) const { return b.segment(static_cast<int>(g) * hidden(), hidden()); }

  void set_zero() {
    W.setZero();
    U.setZero();
    b.setZero();
  }
};

/// Glorot-uniform weights per gate block, zero biases. Each gate block gets its
/// own forked stream so the draw is independent of layout.
inline GruLayerParams init_gru_layer(const Rng &rng, Eigen::Index in_dim,
                                     Eigen::Index hidden) {
  GruLayerParams p(in_dim, hidden);
  static constexpr const char *names[] = {"z", "r", "h"};
  for (int g = 0; g < 3; ++g) {
    Rng wr = rng.fork(std::string("W_") + names[g]);
    Rng ur = rng.fork(std::string("U_") + names[g]);
    p.W_gate(Gate(g)) = init_uniform(wr, hidden, in_dim);
    p.U_gate(Gate(g)) = init_uniform(ur, hidden, hidden);
  }
  return p;
}

namespace detail {
inline void check_step_dims(const GruLayerParams &p, Eigen::Index h, Eigen::Index x) {
  if (p.W.rows() != 3 * p.hidden() || p.b.size() != 3 * p.hidden())
    throw DimensionError("gru: inconsistent layer params W " +
                         shape_str(p.W.rows(), p.W.cols()) + ", U " +
                         shape_str(p.U.rows(), p.U.cols()));
  if (h != p.hidden())
    throw DimensionError("gru_step: h_prev length " + std::to_string(h) +
                         " but layer hidden size " + std::to_string(p.hidden()));
  if (x != p.in_dim())
    throw DimensionError("gru_step: input length " + std::to_string(x) +
                         " but layer input size " + std::to_string(p.in_dim()));
}

inline double sigm(double a) { return 1.0 / (1.0 + std::exp(-a)); }
} // namespace detail

/// One recurrence step.
inline Vec gru_step(const GruLayerParams &p, const Vec &h_prev, const Vec &x) {
  detail::check_step_dims(p, h_prev.size(), x.size());
  const Eigen::Index H = p.hidden();
  const Vec ax = p.W * x + p.b;
  const Vec zr = p.U.topRows(2 * H) * h_prev;
  Vec z = (ax.head(H) + zr.head(H)).unaryExpr(&detail::sigm);
  Vec r = (ax.segment(H, H) + zr.tail(H)).unaryExpr(&detail::sigm);
  Vec rh = r.cwiseProduct(h_prev);
  Vec hc = (ax.tail(H) + p.U_gate(Gate::candidate) * rh).array().tanh().matrix();
  return h_prev + z.cwiseProduct(hc - h_prev);
}

/// Everything a backward pass over one direction of one layer needs.
/// Columns are in processing order (reversed for backward-direction runs).
struct GruTrace {
  SeqMat x;      ///< in x T inputs
  SeqMat h_prev; ///< H x T
  SeqMat z, r, rh, hc;
  SeqMat h; ///< H x T outputs
};

/// Runs the recurrence over the columns of x from a zero initial state.
/// If trace is non-null it is filled for a later gru_backward.
inline SeqMat gru_forward(const GruLayerParams &p, const SeqMat &x, GruTrace *trace) {
  const Eigen::Index H = p.hidden();
  const Eigen::Index T = x.cols();
  if (x.rows() != p.in_dim())
    throw DimensionError("gru_forward: input rows " + std::to_string(x.rows()) +
                         " but layer input size " + std::to_string(p.in_dim()));
  SeqMat out(H, T);
  if (T == 0)
    return out;

  // Input projections for all steps at once.
  SeqMat ax = p.W * x;
  ax.colwise() += p.b;

  if (trace) {
    trace->x = x;
    trace->h_prev.resize(H, T);
    trace->z.resize(H, T);
    trace->r.resize(H, T);
    trace->rh.resize(H, T);
    trace->hc.resize(H, T);
  }

  Vec h = Vec::Zero(H);
  Vec zr(2 * H), z(H), r(H), rh(H), hc(H);
  const auto U_zr = p.U.topRows(2 * H);
  const auto U_h = p.U_gate(Gate::candidate);
  for (Eigen::Index t = 0; t < T; ++t) {
    zr.noalias() = U_zr * h;
    for (Eigen::Index i = 0; i < H; ++i) {
      z[i] = detail::sigm(ax(i, t) + zr[i]);
      r[i] = detail::sigm(ax(H + i, t) + zr[H + i]);
      rh[i] = r[i] * h[i];
    }
    hc.noalias() = U_h * rh;
    for (Eigen::Index i = 0; i < H; ++i)
      hc[i] = std::tanh(ax(2 * H + i, t) + hc[i]);
    if (trace) {
      trace->h_prev.col(t) = h;
      trace->z.col(t) = z;
      trace->r.col(t) = r;
      trace->rh.col(t) = rh;
      trace->hc.col(t) = hc;
    }
    for (Eigen::Index i = 0; i < H; ++i)
      h[i] += z[i] * (hc[i] - h[i]);
    out.col(t) = h;
  }
  if (trace)
    trace->h = out;
  return out;
}

/// Backpropagation through time. dh holds dLoss/dh_t for every output column
/// (processing order). Parameter gradients are accumulated into grad; the
/// return value is dLoss/dx (in x T).
inline SeqMat gru_backward(const GruLayerParams &p, const GruTrace &tr, const SeqMat &dh,
                           GruLayerParams &grad) {
  const Eigen::Index H = p.hidden();
  const Eigen::Index T = tr.x.cols();
  if (T == 0)
    return SeqMat(p.in_dim(), 0);

  SeqMat da(3 * H, T);
  Vec carry = Vec::Zero(H);
  Vec d(H), drh(H), dzr(2 * H);
  const auto U_zr = p.U.topRows(2 * H);
  const auto U_h = p.U_gate(Gate::candidate);
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    d = dh.col(t) + carry;
    const auto z = tr.z.col(t);
    const auto r = tr.r.col(t);
    const auto hc = tr.hc.col(t);
    const auto hp = tr.h_prev.col(t);
    for (Eigen::Index i = 0; i < H; ++i) {
      const double dz = d[i] * (hc[i] - hp[i]);
      da(i, t) = dz * z[i] * (1.0 - z[i]);
      da(2 * H + i, t) = d[i] * z[i] * (1.0 - hc[i] * hc[i]);
      carry[i] = d[i] * (1.0 - z[i]);
    }
    drh.noalias() = U_h.transpose() * da.col(t).tail(H);
    for (Eigen::Index i = 0; i < H; ++i) {
      da(H + i, t) = drh[i] * hp[i] * r[i] * (1.0 - r[i]);
      carry[i] += drh[i] * r[i];
    }
    carry.noalias() += U_zr.transpose() * da.col(t).head(2 * H);
  }

  grad.W.noalias() += da * tr.x.transpose();
  grad.b += da.rowwise().sum();
  grad.U.topRows(2 * H).noalias() += da.topRows(2 * H) * tr.h_prev.transpose();
  grad.U_gate(Gate::candidate).noalias() += da.bottomRows(H) * tr.rh.transpose();
  return p.W.transpose() * da;
}

} // namespace comprnn
