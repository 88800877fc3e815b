// SPDX-License-Identifier: Apache-2.0
#include "comprnn/gru.hpp"

#include <gtest/gtest.h>

using namespace comprnn;

namespace {
Vec random_vec(Rng &r, int n, double scale) {
  Vec v(n);
  for (int i = 0; i < n; ++i)
    v[i] = (2 * r.uniform01() - 1) * scale;
  return v;
}
} // namespace

TEST(GruStep, ZeroParamsHalveState) {
  GruLayerParams p(3, 4);
  Vec h(4);
  h << 0.8, -0.4, 2.0, 0.0;
  const Vec out = gru_step(p, h, Vec::Ones(3));
  for (int i = 0; i < 4; ++i)
    EXPECT_DOUBLE_EQ(out[i], 0.5 * h[i]);
}

TEST(GruStep, ZeroParamsZeroState) {
  GruLayerParams p(3, 4);
  EXPECT_EQ(gru_step(p, Vec::Zero(4), Vec::Ones(3)), Vec::Zero(4));
}

TEST(GruStep, DimensionMismatch) {
  GruLayerParams p(3, 4);
  EXPECT_THROW(gru_step(p, Vec::Zero(5), Vec::Zero(3)), DimensionError);
  EXPECT_THROW(gru_step(p, Vec::Zero(4), Vec::Zero(2)), DimensionError);
}

TEST(GruStep, BoundedByConvexCombination) {
  Rng r(21);
  for (int trial = 0; trial < 500; ++trial) {
    GruLayerParams p(5, 6);
    p.W = init_uniform(r, 18, 5) * 10.0;
    p.U = init_uniform(r, 18, 6) * 10.0;
    p.b = random_vec(r, 18, 5.0);
    const Vec h = random_vec(r, 6, 3.0);
    const Vec out = gru_step(p, h, random_vec(r, 5, 4.0));
    for (int i = 0; i < 6; ++i)
      EXPECT_LE(std::abs(out[i]), std::max(std::abs(h[i]), 1.0) + 1e-15);
  }
}

TEST(GruForward, MatchesRepeatedSteps) {
  Rng r(4);
  const auto p = init_gru_layer(r, 3, 5);
  SeqMat x(3, 6);
  for (int t = 0; t < 6; ++t)
    x.col(t) = random_vec(r, 3, 1.0);
  const SeqMat hs = gru_forward(p, x, nullptr);
  Vec h = Vec::Zero(5);
  for (int t = 0; t < 6; ++t) {
    h = gru_step(p, h, x.col(t));
    EXPECT_LT((hs.col(t) - h).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(GruForward, EmptySequence) {
  GruLayerParams p(3, 4);
  EXPECT_EQ(gru_forward(p, SeqMat(3, 0), nullptr).cols(), 0);
}

TEST(GruBackward, MatchesFiniteDifferencesOnInputs) {
  Rng r(13);
  auto p = init_gru_layer(r, 3, 4);
  p.b = random_vec(r, 12, 0.5);
  SeqMat x(3, 5);
  for (int t = 0; t < 5; ++t)
    x.col(t) = random_vec(r, 3, 1.0);
  SeqMat weights(4, 5);
  for (int t = 0; t < 5; ++t)
    weights.col(t) = random_vec(r, 4, 1.0);
  // loss = sum_t <weights_t, h_t>
  auto loss = [&](const Vec &flat) {
    const SeqMat xs = Eigen::Map<const SeqMat>(flat.data(), 3, 5);
    return gru_forward(p, xs, nullptr).cwiseProduct(weights).sum();
  };
  GruTrace tr;
  gru_forward(p, x, &tr);
  GruLayerParams g(3, 4);
  const SeqMat dx = gru_backward(p, tr, weights, g);
  const Vec flat = Eigen::Map<const Vec>(x.data(), 15);
  const Vec num = finite_diff(loss, flat, 1e-5);
  for (int i = 0; i < 15; ++i)
    EXPECT_NEAR(dx.data()[i], num[i], 1e-8);
}
