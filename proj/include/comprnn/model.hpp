// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Compositional character -> word -> sentence classifier.
 *
 * Characters are embedded, a bidirectional GRU stack turns each word's
 * character sequence into a word vector, a second bidirectional GRU stack
 * turns the word vectors into a sentence vector, and a dense softmax layer
 * yields [p(NOT), p(HATE)].
 *
 * A stack representation is concat(final forward state, final backward state)
 * of the top layer. Empty sequences yield the zero vector. In train mode,
 * inverted dropout is applied at every inter-layer boundary of a stack and
 * on the stack's output representation.
 */
#pragma once

#include "comprnn/example.hpp"
#include "comprnn/gru.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace comprnn {

struct ModelShape {
  int char_emb_dim = 25;
  int hidden = 60;
  int layers_per_stack = 2;
  double dropout_rate = 0.5;

  static constexpr int directions = 2;
  static constexpr int classes = 2;

  int word_repr_dim() const { return directions * hidden; }
  int sent_repr_dim() const { return directions * hidden; }

  void validate() const {
    if (char_emb_dim < 1 || hidden < 1 || layers_per_stack < 1)
      throw DimensionError("ModelShape: dimensions must be positive (char_emb_dim=" +
                           std::to_string(char_emb_dim) + ", hidden=" +
                           std::to_string(hidden) + ", layers_per_stack=" +
                           std::to_string(layers_per_stack) + ")");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
      throw Error("ModelShape: dropout_rate must lie in [0, 1)");
  }

  bool operator==(const ModelShape &) const = default;
};

struct BiGruLayer {
  GruLayerParams fwd;
  GruLayerParams bwd;
};

struct BiGruStack {
  std::vector<BiGruLayer> layers;

  Eigen::Index in_dim() const { return layers.front().fwd.in_dim(); }
  Eigen::Index hidden() const { return layers.front().fwd.hidden(); }
  Eigen::Index out_dim() const { return 2 * hidden(); }
};

inline BiGruStack make_stack(Eigen::Index in_dim, Eigen::Index hidden, int layers) {
  BiGruStack s;
  for (int l = 0; l < layers; ++l) {
    const Eigen::Index in = l == 0 ? in_dim : 2 * hidden;
    s.layers.push_back({GruLayerParams(in, hidden), GruLayerParams(in, hidden)});
  }
  return s;
}

inline BiGruStack init_stack(const Rng &rng, Eigen::Index in_dim, Eigen::Index hidden,
                             int layers) {
  BiGruStack s;
  for (int l = 0; l < layers; ++l) {
    const Eigen::Index in = l == 0 ? in_dim : 2 * hidden;
    const Rng lr = rng.fork("l" + std::to_string(l));
    s.layers.push_back({init_gru_layer(lr.fork("fwd"), in, hidden),
                        init_gru_layer(lr.fork("bwd"), in, hidden)});
  }
  return s;
}

/// Every learnable array. Also used, shape-identical, as the gradient
/// accumulator.
struct ModelParams {
  ModelShape shape;
  Mat char_embeddings; ///< (|char vocab| + 1) x char_emb_dim, row 0 = unknown
  BiGruStack char_to_word;
  BiGruStack word_to_sentence;
  Mat head_w; ///< classes x sent_repr_dim
  Vec head_b; ///< classes

  Eigen::Index char_rows() const { return char_embeddings.rows(); }
};
using Gradients = ModelParams;

/// Visits every array as f(name, Mat& | Vec&), in a fixed order.
template <class Params, class F> void for_each_array(Params &m, F &&f) {
  f(std::string("char_embeddings"), m.char_embeddings);
  auto stack = [&](const std::string &prefix, auto &s) {
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
      const std::string p = prefix + ".l" + std::to_string(l);
      for (auto [dir, layer] : {std::pair{"fwd", &s.layers[l].fwd},
                                std::pair{"bwd", &s.layers[l].bwd}}) {
        const std::string q = p + "." + dir;
        f(q + ".W", layer->W);
        f(q + ".U", layer->U);
        f(q + ".b", layer->b);
      }
    }
  };
  stack("char_to_word", m.char_to_word);
  stack("word_to_sentence", m.word_to_sentence);
  f(std::string("head_w"), m.head_w);
  f(std::string("head_b"), m.head_b);
}

/// Zero-filled model with the given shape; char_rows includes the unknown row.
inline ModelParams zero_model(const ModelShape &shape, Eigen::Index char_rows) {
  shape.validate();
  ModelParams m;
  m.shape = shape;
  m.char_embeddings = Mat::Zero(char_rows, shape.char_emb_dim);
  m.char_to_word = make_stack(shape.char_emb_dim, shape.hidden, shape.layers_per_stack);
  m.word_to_sentence =
      make_stack(shape.word_repr_dim(), shape.hidden, shape.layers_per_stack);
  m.head_w = Mat::Zero(ModelShape::classes, shape.sent_repr_dim());
  m.head_b = Vec::Zero(ModelShape::classes);
  return m;
}

inline Gradients zeros_like(const ModelParams &m) {
  Gradients g = m;
  for_each_array(g, [](const std::string &, auto &a) { a.setZero(); });
  return g;
}

/// Glorot-uniform weights (embedding table included), zero biases.
inline ModelParams init_model(const ModelShape &shape, Eigen::Index char_rows,
                              const Rng &rng) {
  ModelParams m = zero_model(shape, char_rows);
  Rng er = rng.fork("char_embeddings");
  m.char_embeddings = init_uniform(er, char_rows, shape.char_emb_dim);
  m.char_to_word = init_stack(rng.fork("char_to_word"), shape.char_emb_dim, shape.hidden,
                              shape.layers_per_stack);
  m.word_to_sentence = init_stack(rng.fork("word_to_sentence"), shape.word_repr_dim(),
                                  shape.hidden, shape.layers_per_stack);
  Rng hr = rng.fork("head_w");
  m.head_w = init_uniform(hr, ModelShape::classes, shape.sent_repr_dim());
  return m;
}

enum class Mode { eval, train };

/// Inverted dropout mask source. Masks are drawn column by column.
class Dropout {
public:
  Dropout(double rate, Rng &rng) : rate_(rate), rng_(&rng) {}

  bool active() const { return rate_ > 0.0; }

  SeqMat mask(Eigen::Index rows, Eigen::Index cols) {
    SeqMat m(rows, cols);
    const double keep = 1.0 / (1.0 - rate_);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r)
        m(r, c) = rng_->uniform01() < rate_ ? 0.0 : keep;
    return m;
  }

private:
  double rate_;
  Rng *rng_;
};

struct StackTrace {
  struct Layer {
    GruTrace fwd, bwd;
    SeqMat in_mask; ///< empty when no dropout on this layer's input
  };
  std::vector<Layer> layers;
  SeqMat out_mask; ///< 2H x 1, empty when no dropout
  Eigen::Index steps = 0;
};

/// Runs a bidirectional stack over the columns of x and returns the
/// representation. drop may be null (eval mode).
inline Vec stack_forward(const BiGruStack &s, const SeqMat &x, Dropout *drop,
                         StackTrace *trace) {
  const Eigen::Index H = s.hidden();
  const Eigen::Index T = x.cols();
  if (x.rows() != s.in_dim())
    throw DimensionError("stack_forward: input dim " + std::to_string(x.rows()) +
                         " but stack expects " + std::to_string(s.in_dim()));
  if (trace) {
    trace->steps = T;
    trace->layers.assign(s.layers.size(), {});
    trace->out_mask.resize(0, 0);
  }
  if (T == 0)
    return Vec::Zero(2 * H);

  const bool dropping = drop && drop->active();
  SeqMat in = x;
  SeqMat hf, hb_rev;
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    StackTrace::Layer *lt = trace ? &trace->layers[l] : nullptr;
    if (l > 0 && dropping) {
      SeqMat m = drop->mask(2 * H, T);
      in.array() *= m.array();
      if (lt)
        lt->in_mask = std::move(m);
    }
    hf = gru_forward(s.layers[l].fwd, in, lt ? &lt->fwd : nullptr);
    const SeqMat in_rev = in.rowwise().reverse();
    hb_rev = gru_forward(s.layers[l].bwd, in_rev, lt ? &lt->bwd : nullptr);
    if (l + 1 < s.layers.size()) {
      in.resize(2 * H, T);
      in.topRows(H) = hf;
      in.bottomRows(H) = hb_rev.rowwise().reverse();
    }
  }
  Vec repr(2 * H);
  repr.head(H) = hf.col(T - 1);
  repr.tail(H) = hb_rev.col(T - 1);
  if (dropping) {
    SeqMat m = drop->mask(2 * H, 1);
    repr.array() *= m.col(0).array();
    if (trace)
      trace->out_mask = std::move(m);
  }
  return repr;
}

/// Backward pass of stack_forward; accumulates into grad and returns dL/dx.
inline SeqMat stack_backward(const BiGruStack &s, const StackTrace &tr, const Vec &drepr,
                             BiGruStack &grad) {
  const Eigen::Index H = s.hidden();
  const Eigen::Index T = tr.steps;
  if (T == 0)
    return SeqMat(s.in_dim(), 0);

  Vec d = drepr;
  if (tr.out_mask.size() != 0)
    d.array() *= tr.out_mask.col(0).array();

  SeqMat dhf = SeqMat::Zero(H, T);
  SeqMat dhb_rev = SeqMat::Zero(H, T);
  dhf.col(T - 1) = d.head(H);
  dhb_rev.col(T - 1) = d.tail(H);

  SeqMat dx;
  for (std::size_t l = s.layers.size(); l-- > 0;) {
    const auto &lt = tr.layers[l];
    dx = gru_backward(s.layers[l].fwd, lt.fwd, dhf, grad.layers[l].fwd);
    const SeqMat dxb_rev = gru_backward(s.layers[l].bwd, lt.bwd, dhb_rev, grad.layers[l].bwd);
    dx += dxb_rev.rowwise().reverse();
    if (l > 0) {
      if (lt.in_mask.size() != 0)
        dx.array() *= lt.in_mask.array();
      dhf = dx.topRows(H);
      dhb_rev = dx.bottomRows(H).rowwise().reverse();
    }
  }
  return dx;
}

namespace detail {
inline SeqMat embed(const ModelParams &m, std::span<const int> chars) {
  SeqMat x(m.shape.char_emb_dim, static_cast<Eigen::Index>(chars.size()));
  for (std::size_t t = 0; t < chars.size(); ++t) {
    const int c = chars[t];
    if (c < 0 || c >= m.char_rows())
      throw DataError("encode_word: char index " + std::to_string(c) +
                      " outside embedding table of " + std::to_string(m.char_rows()) +
                      " rows");
    x.col(static_cast<Eigen::Index>(t)) = m.char_embeddings.row(c).transpose();
  }
  return x;
}

inline std::optional<Dropout> dropout_for(const ModelParams &m, Mode mode, Rng *rng) {
  if (mode == Mode::eval || m.shape.dropout_rate == 0.0)
    return std::nullopt;
  if (!rng)
    throw Error("train-mode forward pass requires an Rng");
  return Dropout(m.shape.dropout_rate, *rng);
}

inline SeqMat as_columns(const std::vector<Vec> &vs, Eigen::Index dim) {
  SeqMat x(dim, static_cast<Eigen::Index>(vs.size()));
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].size() != dim)
      throw DimensionError("encode_sentence: word vector " + std::to_string(i) +
                           " has length " + std::to_string(vs[i].size()) +
                           ", expected " + std::to_string(dim));
    x.col(static_cast<Eigen::Index>(i)) = vs[i];
  }
  return x;
}
} // namespace detail

/// Word representation (length word_repr_dim) from character indices.
inline Vec encode_word(const ModelParams &m, std::span<const int> chars, Mode mode,
                       Rng *rng = nullptr) {
  auto drop = detail::dropout_for(m, mode, rng);
  return stack_forward(m.char_to_word, detail::embed(m, chars), drop ? &*drop : nullptr,
                       nullptr);
}

/// Sentence representation (length sent_repr_dim) from word representations.
inline Vec encode_sentence(const ModelParams &m, const std::vector<Vec> &word_reprs,
                           Mode mode, Rng *rng = nullptr) {
  auto drop = detail::dropout_for(m, mode, rng);
  return stack_forward(m.word_to_sentence,
                       detail::as_columns(word_reprs, m.shape.word_repr_dim()),
                       drop ? &*drop : nullptr, nullptr);
}

/// softmax(head_w * s + head_b).
inline Vec head_probs(const ModelParams &m, const Vec &sentence_repr) {
  return softmax(matvec(m.head_w, sentence_repr) + m.head_b);
}

/// [p(NOT), p(HATE)] for a sentence given as per-word character indices.
inline Vec classify(const ModelParams &m, const std::vector<std::vector<int>> &sentence,
                    Mode mode, Rng *rng = nullptr) {
  std::vector<Vec> words;
  words.reserve(sentence.size());
  for (const auto &w : sentence)
    words.push_back(encode_word(m, w, mode, rng));
  return head_probs(m, encode_sentence(m, words, mode, rng));
}

/// Eval-mode word vectors memoized by character sequence. Results are
/// bitwise identical to uncached encode_word calls.
class WordCache {
public:
  explicit WordCache(const ModelParams &m) : m_(&m) {}

  const Vec &get(const std::vector<int> &chars) {
    std::string key(reinterpret_cast<const char *>(chars.data()), chars.size() * sizeof(int));
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_.emplace(std::move(key), encode_word(*m_, chars, Mode::eval)).first;
    return it->second;
  }

private:
  const ModelParams *m_;
  std::unordered_map<std::string, Vec> cache_;
};

inline Vec classify_cached(const ModelParams &m, const Example &ex, WordCache &cache) {
  std::vector<Vec> words;
  words.reserve(ex.char_ids.size());
  for (const auto &w : ex.char_ids)
    words.push_back(cache.get(w));
  return head_probs(m, encode_sentence(m, words, Mode::eval));
}

/// Baseline that replaces every word outside the training vocabulary with an
/// all-ones word vector instead of composing it from characters.
struct FrozenModel {
  ModelParams base;
  std::unordered_set<std::string> train_vocab;
  Vec oov_vector;

  FrozenModel(ModelParams params, std::unordered_set<std::string> vocab)
      : base(std::move(params)), train_vocab(std::move(vocab)),
        oov_vector(Vec::Ones(base.shape.word_repr_dim())) {}
};

/// Word vectors the frozen model feeds into the sentence encoder.
/// The cache, when given, must have been built over f.base.
inline std::vector<Vec> frozen_word_reprs(const FrozenModel &f, const Example &ex,
                                          WordCache *cache = nullptr) {
  std::vector<Vec> out;
  out.reserve(ex.words.size());
  for (std::size_t i = 0; i < ex.words.size(); ++i) {
    if (!f.train_vocab.contains(ex.words[i]))
      out.push_back(f.oov_vector);
    else if (cache)
      out.push_back(cache->get(ex.char_ids[i]));
    else
      out.push_back(encode_word(f.base, ex.char_ids[i], Mode::eval));
  }
  return out;
}

inline Vec frozen_classify(const FrozenModel &f, const Example &ex, WordCache *cache = nullptr) {
  return head_probs(f.base,
                    encode_sentence(f.base, frozen_word_reprs(f, ex, cache), Mode::eval));
}

/// Cross-entropy loss of one example in train mode plus its gradient,
/// accumulated into grad. Dropout masks are drawn from rng once and reused
/// by the backward pass.
inline double backward(const ModelParams &m, const Example &ex, Rng &rng, Gradients &grad) {
  if (ex.label != kNotHate && ex.label != kHate)
    throw DataError("backward: label must be 0 or 1, got " + std::to_string(ex.label));
  auto drop = detail::dropout_for(m, Mode::train, &rng);
  Dropout *dp = drop ? &*drop : nullptr;

  const std::size_t n = ex.char_ids.size();
  std::vector<StackTrace> word_traces(n);
  SeqMat word_reprs(m.shape.word_repr_dim(), static_cast<Eigen::Index>(n));
  try {
    for (std::size_t i = 0; i < n; ++i)
      word_reprs.col(static_cast<Eigen::Index>(i)) =
          stack_forward(m.char_to_word, detail::embed(m, ex.char_ids[i]), dp, &word_traces[i]);
  } catch (const NonFiniteError &e) {
    throw DivergenceError(std::string("backward: ") + e.what());
  }

  StackTrace sent_trace;
  Vec s, p;
  try {
    s = stack_forward(m.word_to_sentence, word_reprs, dp, &sent_trace);
    p = head_probs(m, s);
  } catch (const NonFiniteError &e) {
    throw DivergenceError(std::string("backward: ") + e.what());
  }
  const double loss = -std::log(p[ex.label]);
  if (!std::isfinite(loss))
    throw DivergenceError("backward: non-finite loss");

  Vec dlogits = p;
  dlogits[ex.label] -= 1.0;
  grad.head_w.noalias() += dlogits * s.transpose();
  grad.head_b += dlogits;
  const Vec ds = m.head_w.transpose() * dlogits;

  const SeqMat dwords = stack_backward(m.word_to_sentence, sent_trace, ds, grad.word_to_sentence);
  for (std::size_t i = 0; i < n; ++i) {
    const SeqMat dx = stack_backward(m.char_to_word, word_traces[i],
                                     dwords.col(static_cast<Eigen::Index>(i)), grad.char_to_word);
    const auto &chars = ex.char_ids[i];
    for (std::size_t t = 0; t < chars.size(); ++t)
      grad.char_embeddings.row(chars[t]) += dx.col(static_cast<Eigen::Index>(t)).transpose();
  }
  return loss;
}

/// Eval-mode cross-entropy of one example.
inline double eval_loss(const ModelParams &m, const Example &ex) {
  const Vec p = classify(m, ex.char_ids, Mode::eval);
  return -std::log(p[ex.label]);
}

} // namespace comprnn
