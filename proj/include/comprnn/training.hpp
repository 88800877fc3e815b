// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Training loop with per-epoch checkpoints and dev-set model
 *         selection, plus transfer of a pre-trained char-to-word encoder.
 *
 * One epoch: seeded shuffle, minibatches, per-example backward with gradients
 * averaged over the batch, global-norm clipping, one optimizer step per batch.
 * After every epoch the model is scored on the dev set and checkpointed. The
 * returned model is the epoch with the best dev score; ties go to the
 * earliest epoch.
 */
#pragma once

#include "comprnn/checkpoint.hpp"
#include "comprnn/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <span>

namespace comprnn {

enum class OptimizerKind { sgd, adam };
enum class SelectionMetric { error, macro_f1, pos_f1 };

inline const char *to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
inline const char *to_string(SelectionMetric m) {
  switch (m) {
  case SelectionMetric::macro_f1:
    return "macro-f1";
  case SelectionMetric::pos_f1:
    return "pos-f1";
  default:
    return "error";
  }
}

inline SelectionMetric parse_selection_metric(const std::string &s) {
  if (s == "error")
    return SelectionMetric::error;
  if (s == "macro-f1")
    return SelectionMetric::macro_f1;
  if (s == "pos-f1")
    return SelectionMetric::pos_f1;
  throw Error("unknown selection metric '" + s + "' (expected error, macro-f1 or pos-f1)");
}

struct TrainConfig {
  ModelShape shape;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 30;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double gradient_clip_norm = 5.0;
  std::string transfer_source; ///< empty: no transfer
  SelectionMetric selection_metric = SelectionMetric::error;

  void validate() const {
    shape.validate();
    if (!(learning_rate > 0.0))
      throw Error("TrainConfig: learning_rate must be positive");
    if (batch_size < 1)
      throw Error("TrainConfig: batch_size must be at least 1");
    if (max_epochs < 1)
      throw Error("TrainConfig: max_epochs must be at least 1");
    if (!(gradient_clip_norm > 0.0))
      throw Error("TrainConfig: gradient_clip_norm must be positive");
  }
};

/// Flat key/value form; keys mirror the field names, with the shape fields
/// inlined.
inline ojson to_json(const TrainConfig &c) {
  return ojson{{"char_emb_dim", c.shape.char_emb_dim},
               {"hidden", c.shape.hidden},
               {"layers_per_stack", c.shape.layers_per_stack},
               {"dropout_rate", c.shape.dropout_rate},
               {"learning_rate", c.learning_rate},
               {"batch_size", c.batch_size},
               {"max_epochs", c.max_epochs},
               {"seed", c.seed},
               {"optimizer", to_string(c.optimizer)},
               {"adam_beta1", c.adam_beta1},
               {"adam_beta2", c.adam_beta2},
               {"adam_epsilon", c.adam_epsilon},
               {"gradient_clip_norm", c.gradient_clip_norm},
               {"transfer_source", c.transfer_source},
               {"selection_metric", to_string(c.selection_metric)}};
}

/// Overlays the keys present in j onto base. Unknown keys are rejected.
inline TrainConfig config_from_json(const ojson &j, TrainConfig c = {}) {
  if (!j.is_object())
    throw Error("config: expected a flat JSON object");
  try {
    for (const auto &[key, v] : j.items()) {
      if (key == "char_emb_dim") c.shape.char_emb_dim = v.get<int>();
      else if (key == "hidden") c.shape.hidden = v.get<int>();
      else if (key == "layers_per_stack") c.shape.layers_per_stack = v.get<int>();
      else if (key == "dropout_rate") c.shape.dropout_rate = v.get<double>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "max_epochs") c.max_epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "optimizer") {
        const auto s = v.get<std::string>();
        if (s == "adam") c.optimizer = OptimizerKind::adam;
        else if (s == "sgd") c.optimizer = OptimizerKind::sgd;
        else throw Error("config: unknown optimizer '" + s + "'");
      }
      else if (key == "adam_beta1") c.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = v.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = v.get<double>();
      else if (key == "gradient_clip_norm") c.gradient_clip_norm = v.get<double>();
      else if (key == "transfer_source") c.transfer_source = v.is_null() ? "" : v.get<std::string>();
      else if (key == "selection_metric") c.selection_metric = parse_selection_metric(v.get<std::string>());
      else throw Error("config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception &e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline TrainConfig load_config(const std::filesystem::path &path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in)
    throw Error(path.string() + ": cannot open config");
  try {
    return config_from_json(ojson::parse(in), std::move(base));
  } catch (const nlohmann::json::parse_error &e) {
    throw Error(path.string() + ": " + e.what());
  }
}

/// Flat views over every array, in for_each_array order.
inline std::vector<std::span<double>> array_spans(ModelParams &m) {
  std::vector<std::span<double>> out;
  for_each_array(m, [&](const std::string &, auto &a) {
    out.emplace_back(a.data(), static_cast<std::size_t>(a.size()));
  });
  return out;
}

inline double global_norm(const Gradients &g) {
  double sq = 0.0;
  for_each_array(g, [&](const std::string &, const auto &a) { sq += a.squaredNorm(); });
  return std::sqrt(sq);
}

/// Rescales g so its global L2 norm is at most max_norm. Returns the norm
/// before clipping.
inline double clip_global_norm(Gradients &g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for_each_array(g, [&](const std::string &, auto &a) { a *= s; });
  }
  return norm;
}

class Optimizer {
public:
  Optimizer(const TrainConfig &cfg, const ModelParams &like)
      : kind_(cfg.optimizer), lr_(cfg.learning_rate), b1_(cfg.adam_beta1),
        b2_(cfg.adam_beta2), eps_(cfg.adam_epsilon) {
    if (kind_ == OptimizerKind::adam) {
      m_ = zeros_like(like);
      v_ = zeros_like(like);
    }
  }

  void step(ModelParams &params, Gradients &grad) {
    auto p = array_spans(params);
    auto g = array_spans(grad);
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t a = 0; a < p.size(); ++a)
        for (std::size_t i = 0; i < p[a].size(); ++i)
          p[a][i] -= lr_ * g[a][i];
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_));
    const double c2 = 1.0 - std::pow(b2_, double(t_));
    auto m = array_spans(m_);
    auto v = array_spans(v_);
    for (std::size_t a = 0; a < p.size(); ++a)
      for (std::size_t i = 0; i < p[a].size(); ++i) {
        const double gi = g[a][i];
        m[a][i] = b1_ * m[a][i] + (1.0 - b1_) * gi;
        v[a][i] = b2_ * v[a][i] + (1.0 - b2_) * gi * gi;
        p[a][i] -= lr_ * (m[a][i] / c1) / (std::sqrt(v[a][i] / c2) + eps_);
      }
  }

private:
  OptimizerKind kind_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  Gradients m_, v_;
};

/// Index of the best score; lower_is_better selects minimum. Earliest wins ties.
inline std::size_t select_best(std::span<const double> scores, bool lower_is_better) {
  if (scores.empty())
    throw Error("select_best: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (lower_is_better ? scores[i] < scores[best] : scores[i] > scores[best])
      best = i;
  return best;
}

/// Eval-mode HATE predictions (argmax, ties to NOT).
inline std::vector<int> predict_labels(const ModelParams &m, const std::vector<Example> &xs) {
  WordCache cache(m);
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto &x : xs) {
    const Vec p = classify_cached(m, x, cache);
    out.push_back(p[kHate] > p[kNotHate] ? kHate : kNotHate);
  }
  return out;
}

inline std::vector<int> gold_labels(const std::vector<Example> &xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const auto &x : xs)
    out.push_back(x.label);
  return out;
}

inline EvalReport evaluate_model(const ModelParams &m, const std::vector<Example> &xs) {
  return evaluate(gold_labels(xs), predict_labels(m, xs));
}

/// Mean eval-mode cross-entropy.
inline double mean_eval_loss(const ModelParams &m, const std::vector<Example> &xs) {
  WordCache cache(m);
  double sum = 0.0;
  for (const auto &x : xs)
    sum += -std::log(classify_cached(m, x, cache)[x.label]);
  return sum / double(xs.size());
}

/// Copies the bundle's embeddings and char-to-word stack into a freshly
/// initialized model; the bundle's char vocabulary replaces the task's.
inline std::pair<ModelParams, CharVocab> init_with_transfer(const EncoderBundle &bundle,
                                                            const TrainConfig &cfg) {
  const ModelShape &s = cfg.shape;
  const ModelShape &b = bundle.shape;
  if (b.char_emb_dim != s.char_emb_dim || b.hidden != s.hidden ||
      b.layers_per_stack != s.layers_per_stack)
    throw DimensionError(
        "init_with_transfer: bundle shape (char_emb_dim " + std::to_string(b.char_emb_dim) +
        ", hidden " + std::to_string(b.hidden) + ", layers " +
        std::to_string(b.layers_per_stack) + ") does not match config shape (char_emb_dim " +
        std::to_string(s.char_emb_dim) + ", hidden " + std::to_string(s.hidden) + ", layers " +
        std::to_string(s.layers_per_stack) + ")");
  if (bundle.char_embeddings.rows() != static_cast<Eigen::Index>(bundle.chars.rows()))
    throw DimensionError("init_with_transfer: bundle embedding rows " +
                         std::to_string(bundle.char_embeddings.rows()) +
                         " do not match its vocabulary (" + std::to_string(bundle.chars.rows()) +
                         " rows)");
  ModelParams m = init_model(s, bundle.char_embeddings.rows(), Rng(cfg.seed).fork("init"));
  m.char_embeddings = bundle.char_embeddings;
  m.char_to_word = bundle.char_to_word;
  return {std::move(m), bundle.chars};
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;     ///< mean train-mode loss over the epoch
  double train_accuracy = 0; ///< eval mode, after the epoch
  double dev_error = 0;
  double dev_macro_f1 = 0;
  double dev_pos_f1 = 0;
  std::string checkpoint; ///< file written, empty if not persisted
};

inline ojson to_json(const EpochRecord &r) {
  return ojson{{"epoch", r.epoch},
               {"train_loss", r.train_loss},
               {"train_accuracy", r.train_accuracy},
               {"dev_error", r.dev_error},
               {"dev_macro_f1", r.dev_macro_f1},
               {"dev_pos_f1", r.dev_pos_f1},
               {"checkpoint", r.checkpoint}};
}

inline ojson history_json(const std::vector<EpochRecord> &h) {
  ojson j = ojson::array();
  for (const auto &r : h)
    j.push_back(to_json(r));
  return j;
}

struct TrainOptions {
  std::filesystem::path checkpoint_dir; ///< empty: checkpoints kept in memory only
  const EncoderBundle *transfer = nullptr; ///< overrides cfg.transfer_source
  std::function<void(const EpochRecord &)> on_epoch;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> history;
  std::size_t best_index = 0;
  /// Parameters at epoch 0, before any update.
  ModelParams initial;
  CharVocab chars;
  std::vector<Example> train_examples;
};

inline std::string checkpoint_filename(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.json", epoch);
  return buf;
}

inline double selection_score(const EpochRecord &r, SelectionMetric m) {
  switch (m) {
  case SelectionMetric::macro_f1:
    return r.dev_macro_f1;
  case SelectionMetric::pos_f1:
    return r.dev_pos_f1;
  default:
    return r.dev_error;
  }
}

inline TrainResult train(const TrainConfig &cfg, const std::vector<TokenizedExample> &train_set,
                         const std::vector<TokenizedExample> &dev_set,
                         const TrainOptions &opts = {}) {
  cfg.validate();
  if (train_set.empty())
    throw DataError("train: empty training set");
  if (dev_set.empty())
    throw DataError("train: empty dev set");

  auto [chars, words] = build_vocabs(train_set);
  std::optional<EncoderBundle> loaded;
  const EncoderBundle *bundle = opts.transfer;
  if (!bundle && !cfg.transfer_source.empty()) {
    loaded = load_bundle(cfg.transfer_source);
    bundle = &*loaded;
  }

  ModelParams params;
  if (bundle) {
    auto [p, cv] = init_with_transfer(*bundle, cfg);
    params = std::move(p);
    chars = std::move(cv);
  } else {
    params = init_model(cfg.shape, static_cast<Eigen::Index>(chars.rows()),
                        Rng(cfg.seed).fork("init"));
  }

  TrainResult result;
  result.initial = params;
  result.train_examples = encode_examples(train_set, chars);
  const auto &train_x = result.train_examples;
  const auto dev_x = encode_examples(dev_set, chars);
  const auto dev_gold = gold_labels(dev_x);

  const ojson cfg_json = to_json(cfg);
  const std::string digest = json_digest(cfg_json);
  if (!opts.checkpoint_dir.empty())
    std::filesystem::create_directories(opts.checkpoint_dir);

  Optimizer opt(cfg, params);
  Gradients grad = zeros_like(params);
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Rng root(cfg.seed);
  const bool lower_better = cfg.selection_metric == SelectionMetric::error;
  std::vector<double> scores;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const Rng erng = root.fork("epoch").fork(static_cast<std::uint64_t>(epoch));
    Rng shuffler = erng.fork("shuffle");
    shuffler.shuffle(std::span(order));
    const Rng drop_root = erng.fork("dropout");

    double loss_sum = 0.0;
    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0, batch = 0; start < order.size(); start += B, ++batch) {
      const std::size_t end = std::min(order.size(), start + B);
      for_each_array(grad, [](const std::string &, auto &a) { a.setZero(); });
      for (std::size_t k = start; k < end; ++k) {
        Rng r = drop_root.fork(static_cast<std::uint64_t>(k));
        try {
          loss_sum += backward(params, train_x[order[k]], r, grad);
        } catch (const DivergenceError &) {
          throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                ", batch " + std::to_string(batch + 1));
        }
      }
      const double inv = 1.0 / double(end - start);
      for_each_array(grad, [&](const std::string &, auto &a) { a *= inv; });
      clip_global_norm(grad, cfg.gradient_clip_norm);
      opt.step(params, grad);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(train_x.size());
    if (!std::isfinite(rec.train_loss))
      throw DivergenceError("train: non-finite mean loss at epoch " + std::to_string(epoch));
    rec.train_accuracy = evaluate_model(params, train_x).accuracy;
    const auto dev = evaluate(dev_gold, predict_labels(params, dev_x));
    rec.dev_error = dev.error;
    rec.dev_macro_f1 = dev.macro_f1;
    rec.dev_pos_f1 = dev.hate.f1;

    Checkpoint ck;
    ck.chars = chars;
    ck.words = words;
    ck.params = params;
    ck.meta = {epoch,          rec.train_loss, rec.train_accuracy, rec.dev_error,
               rec.dev_macro_f1, rec.dev_pos_f1, cfg.seed,         digest, cfg_json};
    if (!opts.checkpoint_dir.empty()) {
      const auto path = opts.checkpoint_dir / checkpoint_filename(epoch);
      save_checkpoint(ck, path);
      rec.checkpoint = path.string();
    }

    scores.push_back(selection_score(rec, cfg.selection_metric));
    const std::size_t best = select_best(scores, lower_better);
    if (best + 1 == scores.size()) {
      result.best = std::move(ck);
      result.best_index = best;
    }
    result.history.push_back(rec);
    if (opts.on_epoch)
      opts.on_epoch(rec);
  }
  result.chars = chars;
  return result;
}

} // namespace comprnn
