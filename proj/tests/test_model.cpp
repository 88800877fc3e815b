// SPDX-License-Identifier: Apache-2.0
#include "synthetic.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <thread>

using namespace comprnn;
using comprnn::testing::tiny_shape;

namespace {

bool bitwise_equal(const Vec &a, const Vec &b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

ModelParams random_model(std::uint64_t seed, ModelShape shape = tiny_shape(), int chars = 8) {
  ModelParams m = init_model(shape, chars, Rng(seed));
  Rng br = Rng(seed).fork("bias");
  for_each_array(m, [&](const std::string &name, auto &a) {
    if (name.ends_with(".b") || name == "head_b")
      for (Eigen::Index i = 0; i < a.size(); ++i)
        a.data()[i] = br.uniform01() - 0.5;
  });
  return m;
}

Example sample_example(int words = 3) {
  Example ex;
  for (int w = 0; w < words; ++w) {
    ex.words.push_back("w" + std::to_string(w));
    ex.char_ids.push_back({1 + w, 2, 3 + (w % 4)});
  }
  ex.label = kHate;
  return ex;
}

} // namespace

TEST(ModelShape, DefaultsFollowPublishedHyperparameters) {
  ModelShape s;
  EXPECT_EQ(s.char_emb_dim, 25);
  EXPECT_EQ(s.hidden, 60);
  EXPECT_EQ(s.layers_per_stack, 2);
  EXPECT_EQ(ModelShape::directions, 2);
  EXPECT_EQ(s.word_repr_dim(), 120);
  EXPECT_EQ(s.sent_repr_dim(), 120);
  EXPECT_EQ(ModelShape::classes, 2);
  EXPECT_EQ(s.dropout_rate, 0.5);
}

TEST(ModelShape, Validation) {
  ModelShape s;
  s.dropout_rate = 1.0;
  EXPECT_THROW(s.validate(), Error);
  s.dropout_rate = 0.5;
  s.hidden = 0;
  EXPECT_THROW(s.validate(), DimensionError);
}

TEST(InitModel, ShapesAndZeroBiases) {
  const ModelParams m = init_model(ModelShape{}, 31, Rng(1));
  EXPECT_EQ(m.char_embeddings.rows(), 31);
  EXPECT_EQ(m.char_embeddings.cols(), 25);
  ASSERT_EQ(m.char_to_word.layers.size(), 2u);
  EXPECT_EQ(m.char_to_word.layers[0].fwd.in_dim(), 25);
  EXPECT_EQ(m.char_to_word.layers[1].fwd.in_dim(), 120);
  EXPECT_EQ(m.word_to_sentence.layers[0].bwd.in_dim(), 120);
  EXPECT_EQ(m.head_w.rows(), 2);
  EXPECT_EQ(m.head_w.cols(), 120);
  EXPECT_EQ(m.char_to_word.layers[1].bwd.b, Vec::Zero(180));
  EXPECT_EQ(m.head_b, Vec::Zero(2));
  const double bound = glorot_bound(60, 120);
  EXPECT_LE(m.char_to_word.layers[1].fwd.W_gate(Gate::reset).cwiseAbs().maxCoeff(), bound);
}

TEST(EncodeWord, EmptyWordIsZero) {
  const auto m = random_model(1);
  const Vec v = encode_word(m, std::vector<int>{}, Mode::eval);
  EXPECT_EQ(v, Vec::Zero(m.shape.word_repr_dim()));
}

TEST(EncodeWord, OutputLength) {
  const ModelParams m = init_model(ModelShape{}, 10, Rng(2));
  for (int len : {1, 2, 7, 20})
    EXPECT_EQ(encode_word(m, std::vector<int>(len, 3), Mode::eval).size(), 120);
}

TEST(EncodeWord, CharacterOrderMatters) {
  int differing = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = random_model(seed);
    const Vec ab = encode_word(m, std::vector<int>{1, 2}, Mode::eval);
    const Vec ba = encode_word(m, std::vector<int>{2, 1}, Mode::eval);
    differing += ab != ba;
  }
  EXPECT_GE(differing, 99);
}

TEST(EncodeWord, RejectsOutOfRangeCharacter) {
  const auto m = random_model(1);
  EXPECT_THROW(encode_word(m, std::vector<int>{99}, Mode::eval), DataError);
}

TEST(EncodeWord, TrainModeNeedsRng) {
  const auto m = random_model(1);
  EXPECT_THROW(encode_word(m, std::vector<int>{1}, Mode::train), Error);
}

TEST(EncodeSentence, EmptySentenceIsZero) {
  const auto m = random_model(3);
  EXPECT_EQ(encode_sentence(m, {}, Mode::eval), Vec::Zero(m.shape.sent_repr_dim()));
}

TEST(EncodeSentence, SingleWordEqualsStackOverOneStep) {
  const auto m = random_model(3);
  const Vec w = encode_word(m, std::vector<int>{1, 4, 2}, Mode::eval);
  SeqMat x(w.size(), 1);
  x.col(0) = w;
  const Vec expect = stack_forward(m.word_to_sentence, x, nullptr, nullptr);
  const Vec got = encode_sentence(m, {w}, Mode::eval);
  EXPECT_TRUE(bitwise_equal(got, expect));
  EXPECT_EQ(got.size(), m.shape.sent_repr_dim());
}

TEST(EncodeSentence, EvalModeDeterministic) {
  const auto m = random_model(4);
  const auto ex = sample_example();
  std::vector<Vec> ws;
  for (const auto &c : ex.char_ids)
    ws.push_back(encode_word(m, c, Mode::eval));
  EXPECT_TRUE(bitwise_equal(encode_sentence(m, ws, Mode::eval), encode_sentence(m, ws, Mode::eval)));
}

TEST(EncodeSentence, RejectsWrongWordDim) {
  const auto m = random_model(4);
  EXPECT_THROW(encode_sentence(m, {Vec::Zero(3)}, Mode::eval), DimensionError);
}

TEST(Classify, OnSimplex) {
  const auto m = random_model(5);
  const Vec p = classify(m, sample_example().char_ids, Mode::eval);
  ASSERT_EQ(p.size(), 2);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_GT(p.minCoeff(), 0.0);
}

TEST(Classify, ZeroHeadGivesUniform) {
  auto m = random_model(6);
  m.head_w.setZero();
  m.head_b.setZero();
  const Vec p = classify(m, sample_example(5).char_ids, Mode::eval);
  EXPECT_EQ(p[0], 0.5);
  EXPECT_EQ(p[1], 0.5);
}

TEST(Classify, EqualsCompositionOfParts) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_model(seed);
    const auto ex = sample_example(1 + static_cast<int>(seed % 4));
    std::vector<Vec> ws;
    for (const auto &c : ex.char_ids)
      ws.push_back(encode_word(m, c, Mode::eval));
    const Vec expect = softmax(matvec(m.head_w, encode_sentence(m, ws, Mode::eval)) + m.head_b);
    EXPECT_TRUE(bitwise_equal(classify(m, ex.char_ids, Mode::eval), expect));
  }
}

TEST(Classify, ShapeChainAtDefaultSize) {
  const ModelParams m = init_model(ModelShape{}, 12, Rng(9));
  const auto ex = sample_example(4);
  std::vector<Vec> ws;
  for (const auto &c : ex.char_ids) {
    ws.push_back(encode_word(m, c, Mode::eval));
    EXPECT_EQ(ws.back().size(), 120);
  }
  const Vec s = encode_sentence(m, ws, Mode::eval);
  EXPECT_EQ(s.size(), 120);
  EXPECT_EQ(matvec(m.head_w, s).size(), 2);
}

TEST(Classify, CachedMatchesUncached) {
  const auto m = random_model(10);
  WordCache cache(m);
  for (int n = 1; n < 6; ++n) {
    const auto ex = sample_example(n);
    EXPECT_TRUE(bitwise_equal(classify_cached(m, ex, cache), classify(m, ex.char_ids, Mode::eval)));
  }
}

TEST(Classify, ConcurrentEvalMatchesSequential) {
  const auto m = random_model(12);
  const auto ex = sample_example(4);
  const Vec expect = classify(m, ex.char_ids, Mode::eval);
  std::vector<Vec> got(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&, t] { got[t] = classify(m, ex.char_ids, Mode::eval); });
  for (auto &t : threads)
    t.join();
  for (const auto &g : got)
    EXPECT_TRUE(bitwise_equal(g, expect));
}

TEST(Dropout, InvertedMaskPreservesExpectation) {
  Rng r(17);
  Vec act(8);
  for (int i = 0; i < 8; ++i)
    act[i] = 0.5 + r.uniform01();
  Rng mr(18);
  Dropout drop(0.5, mr);
  Vec sum = Vec::Zero(8);
  for (int k = 0; k < 10000; ++k)
    sum += act.cwiseProduct(drop.mask(8, 1).col(0));
  const Vec mean = sum / 10000.0;
  for (int i = 0; i < 8; ++i)
    EXPECT_NEAR(mean[i], act[i], 0.03 * act[i]) << "coordinate " << i;
}

TEST(Dropout, TrainModeDiffersFromEvalAndIsSeeded) {
  const auto m = random_model(13);
  const auto ex = sample_example();
  Rng a(1), b(1);
  const Vec pa = classify(m, ex.char_ids, Mode::train, &a);
  const Vec pb = classify(m, ex.char_ids, Mode::train, &b);
  EXPECT_TRUE(bitwise_equal(pa, pb));
  EXPECT_FALSE(bitwise_equal(pa, classify(m, ex.char_ids, Mode::eval)));
}

TEST(Frozen, InVocabularyMatchesClassify) {
  const auto m = random_model(14);
  const auto ex = sample_example(3);
  FrozenModel f(m, {"w0", "w1", "w2"});
  EXPECT_TRUE(bitwise_equal(frozen_classify(f, ex), classify(m, ex.char_ids, Mode::eval)));
}

TEST(Frozen, OutOfVocabularyWordBecomesAllOnes) {
  const auto m = random_model(15, ModelShape{}, 8);
  const auto ex = sample_example(3);
  FrozenModel f(m, {"w0", "w2"});
  const auto reprs = frozen_word_reprs(f, ex);
  ASSERT_EQ(reprs.size(), 3u);
  EXPECT_EQ(reprs[1], Vec::Ones(120));
  EXPECT_TRUE(bitwise_equal(reprs[0], encode_word(m, ex.char_ids[0], Mode::eval)));
  const Vec expect = head_probs(m, encode_sentence(m, reprs, Mode::eval));
  EXPECT_TRUE(bitwise_equal(frozen_classify(f, ex), expect));
}

TEST(Frozen, EmptyVocabularyMapsEverythingToOnes) {
  const auto m = random_model(16);
  FrozenModel f(m, {});
  for (const auto &v : frozen_word_reprs(f, sample_example(4)))
    EXPECT_EQ(v, Vec::Ones(m.shape.word_repr_dim()));
}

TEST(Backward, SoftmaxCrossEntropyHeadBias) {
  auto m = random_model(20, tiny_shape(0.0));
  m.head_w.setZero();
  m.head_b.setZero();
  auto ex = sample_example();
  ex.label = kHate;
  Gradients g = zeros_like(m);
  Rng r(0);
  const double loss = backward(m, ex, r, g);
  EXPECT_DOUBLE_EQ(loss, std::log(2.0));
  EXPECT_DOUBLE_EQ(g.head_b[0], 0.5);
  EXPECT_DOUBLE_EQ(g.head_b[1], -0.5);
}

TEST(Backward, LossNonNegativeAndMatchesTrainForward) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto m = random_model(seed);
    auto ex = sample_example(2 + static_cast<int>(seed % 3));
    ex.label = static_cast<int>(seed % 2);
    Gradients g = zeros_like(m);
    Rng r1(seed), r2(seed);
    const double loss = backward(m, ex, r1, g);
    const Vec p = classify(m, ex.char_ids, Mode::train, &r2);
    EXPECT_GE(loss, 0.0);
    EXPECT_DOUBLE_EQ(loss, -std::log(p[ex.label]));
  }
}

TEST(Backward, RejectsBadLabel) {
  const auto m = random_model(1);
  auto ex = sample_example();
  ex.label = 2;
  Gradients g = zeros_like(m);
  Rng r(0);
  EXPECT_THROW(backward(m, ex, r, g), DataError);
}

TEST(Backward, NonFiniteLossSignalsDivergence) {
  auto m = random_model(1);
  m.head_b[kHate] = std::numeric_limits<double>::quiet_NaN();
  auto ex = sample_example();
  Gradients g = zeros_like(m);
  Rng r(0);
  EXPECT_THROW(backward(m, ex, r, g), DivergenceError);
}

TEST(Backward, DropoutMasksReusedInBackward) {
  // With dropout on, the gradient must be that of the same masked network:
  // compare against finite differences of the train-mode loss with a fixed
  // mask stream.
  auto m = random_model(30, tiny_shape(0.5));
  const auto ex = sample_example(2);
  Gradients g = zeros_like(m);
  Rng r(77);
  backward(m, ex, r, g);
  Vec x = Eigen::Map<const Vec>(m.head_w.data(), m.head_w.size());
  auto loss_at = [&](const Vec &v) {
    ModelParams probe = m;
    Eigen::Map<Vec>(probe.head_w.data(), probe.head_w.size()) = v;
    Rng rr(77);
    return -std::log(classify(probe, ex.char_ids, Mode::train, &rr)[ex.label]);
  };
  const Vec num = finite_diff(loss_at, x, 1e-5);
  for (Eigen::Index i = 0; i < num.size(); ++i)
    EXPECT_NEAR(g.head_w.data()[i], num[i], 1e-8);

  Vec e = Eigen::Map<const Vec>(m.char_embeddings.data(), m.char_embeddings.size());
  auto loss_emb = [&](const Vec &v) {
    ModelParams probe = m;
    Eigen::Map<Vec>(probe.char_embeddings.data(), probe.char_embeddings.size()) = v;
    Rng rr(77);
    return -std::log(classify(probe, ex.char_ids, Mode::train, &rr)[ex.label]);
  };
  const Vec num_e = finite_diff(loss_emb, e, 1e-5);
  for (Eigen::Index i = 0; i < num_e.size(); ++i)
    EXPECT_NEAR(g.char_embeddings.data()[i], num_e[i], 1e-8);
}
