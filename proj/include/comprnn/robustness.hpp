// SPDX-License-Identifier: Apache-2.0
/**
 * @file   robustness.hpp
 * @brief  Character-noise injection at word level and robustness sweeps of
 *         the compositional model against the frozen baseline.
 *
 * At noise level N, round-half-up(N/100 * W) distinct words of a W-word
 * sentence each receive exactly one edit: with probability 1/2 a uniformly
 * chosen character is deleted, otherwise it is duplicated in place. A
 * one-character word drawn for deletion is duplicated instead.
 */
#pragma once

#include "comprnn/corpus.hpp"
#include "comprnn/metrics.hpp"
#include "comprnn/model.hpp"
#include "comprnn/training.hpp"

#include <cstdio>
#include <map>
#include <ostream>

namespace comprnn {

/// Noise percentage; a multiple of 10 in [0, 100].
class NoiseLevel {
public:
  explicit NoiseLevel(int percent) : percent_(percent) {
    if (percent < 0 || percent > 100 || percent % 10 != 0)
      throw Error("noise level " + std::to_string(percent) +
                  " is not a multiple of 10 in [0, 100]");
  }
  int percent() const { return percent_; }
  auto operator<=>(const NoiseLevel &) const = default;

private:
  int percent_;
};

inline std::vector<NoiseLevel> all_noise_levels() {
  std::vector<NoiseLevel> out;
  for (int n = 0; n <= 100; n += 10)
    out.emplace_back(n);
  return out;
}

/// Parses "start..end:step" (e.g. "0..100:10") or a comma list ("0,50,100").
inline std::vector<NoiseLevel> parse_levels(const std::string &text) {
  std::vector<NoiseLevel> out;
  int a = 0, b = 0, step = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d..%d:%d%c", &a, &b, &step, &tail) == 3) {
    if (step <= 0 || b < a)
      throw Error("--levels '" + text + "': need start <= end and positive step");
    for (int n = a; n <= b; n += step)
      out.emplace_back(n);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(tok, &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (tok.empty() || used != tok.size())
      throw Error("--levels '" + text + "': expected start..end:step or a comma list");
    if (!out.empty() && NoiseLevel(n) <= out.back())
      throw Error("--levels '" + text + "': levels must be strictly increasing");
    out.emplace_back(n);
    if (comma == std::string::npos)
      break;
    pos = comma + 1;
  }
  return out;
}

enum class EditKind { remove, duplicate };

/// Applies one edit at a code-point position.
inline std::string apply_edit(const std::string &word, EditKind kind, std::size_t pos) {
  auto chars = utf8_chars(word);
  if (pos >= chars.size())
    throw Error("apply_edit: position " + std::to_string(pos) + " outside word of length " +
                std::to_string(chars.size()));
  if (kind == EditKind::remove)
    chars.erase(chars.begin() + static_cast<std::ptrdiff_t>(pos));
  else
    chars.insert(chars.begin() + static_cast<std::ptrdiff_t>(pos), chars[pos]);
  std::string out;
  for (auto &c : chars)
    out += c;
  return out;
}

/// One random deletion or duplication. Draws the edit kind, then the position.
inline std::string perturb_word(Rng &rng, const std::string &word) {
  const auto len = utf8_chars(word).size();
  if (len == 0)
    throw Error("perturb_word: empty word");
  EditKind kind = rng.uniform_below(2) == 0 ? EditKind::remove : EditKind::duplicate;
  const auto pos = static_cast<std::size_t>(rng.uniform_below(len));
  if (kind == EditKind::remove && len == 1)
    kind = EditKind::duplicate;
  return apply_edit(word, kind, pos);
}

/// round-half-up(level / 100 * words), in exact integer arithmetic.
inline std::size_t noisy_word_count(NoiseLevel level, std::size_t words) {
  return (static_cast<std::size_t>(level.percent()) * words + 50) / 100;
}

/// Positions chosen by a partial Fisher-Yates pass, edited in selection order.
inline std::vector<std::string> perturb_sentence(Rng &rng, const std::vector<std::string> &words,
                                                 NoiseLevel level) {
  std::vector<std::string> out = words;
  const std::size_t k = noisy_word_count(level, words.size());
  std::vector<std::size_t> idx(words.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_below(idx.size() - i));
    std::swap(idx[i], idx[j]);
    out[idx[i]] = perturb_word(rng, words[idx[i]]);
  }
  return out;
}

using Sentences = std::vector<std::vector<std::string>>;

struct NoisySuite {
  std::string corpus_id;
  std::uint64_t seed = 0;
  std::map<NoiseLevel, Sentences> versions;
};

/// One independent pass per level, each driven by Rng(seed).fork("noise").fork(level).
/// Level 0 is a verbatim copy.
inline NoisySuite make_suite(const Sentences &corpus, std::uint64_t seed,
                             const std::vector<NoiseLevel> &levels = all_noise_levels(),
                             std::string corpus_id = {}) {
  if (corpus.empty())
    throw DataError("make_suite: empty corpus");
  NoisySuite suite;
  suite.corpus_id = std::move(corpus_id);
  suite.seed = seed;
  const Rng root = Rng(seed).fork("noise");
  for (const auto level : levels) {
    if (level.percent() == 0) {
      suite.versions.emplace(level, corpus);
      continue;
    }
    Rng rng = root.fork(static_cast<std::uint64_t>(level.percent()));
    Sentences version;
    version.reserve(corpus.size());
    for (const auto &s : corpus) {
      if (s.empty())
        throw DataError("make_suite: empty sentence");
      version.push_back(perturb_sentence(rng, s, level));
    }
    suite.versions.emplace(level, std::move(version));
  }
  return suite;
}

/// Writes one noisy version as TSV (words joined by single spaces).
inline void write_noisy_tsv(std::ostream &out, const Sentences &version,
                            const std::vector<RawRecord> &base) {
  if (version.size() != base.size())
    throw DataError("write_noisy_tsv: version has " + std::to_string(version.size()) +
                    " sentences but base corpus has " + std::to_string(base.size()));
  std::vector<RawRecord> recs = base;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    std::string text;
    for (const auto &w : version[i])
      text += (text.empty() ? "" : " ") + w;
    recs[i].text = text;
  }
  write_tsv(out, recs);
}

struct CurvePoint {
  NoiseLevel level{0};
  double macro_f1 = 0;
  double accuracy = 0;
};

struct RobustnessCurve {
  std::string model;
  std::vector<CurvePoint> points;
};

inline const CurvePoint &point_at(const RobustnessCurve &c, int percent) {
  for (const auto &p : c.points)
    if (p.level.percent() == percent)
      return p;
  throw Error("curve '" + c.model + "' has no point at noise " + std::to_string(percent));
}

/// Macro F1 and accuracy of the compositional and frozen models on every
/// suite version. Both models share `model`'s parameters.
inline std::pair<RobustnessCurve, RobustnessCurve>
sweep(const ModelParams &model, const FrozenModel &frozen, const NoisySuite &suite,
      std::span<const int> golds, const CharVocab &chars) {
  RobustnessCurve comp{"compositional", {}}, froz{"frozen", {}};
  WordCache comp_cache(model);
  WordCache froz_cache(frozen.base);
  for (const auto &[level, sentences] : suite.versions) {
    if (sentences.size() != golds.size())
      throw DataError("sweep: " + std::to_string(golds.size()) + " gold labels for " +
                      std::to_string(sentences.size()) + " sentences");
    std::vector<int> pc, pf;
    pc.reserve(golds.size());
    pf.reserve(golds.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const Example ex = encode_example(sentences[i], golds[i], chars);
      const Vec a = classify_cached(model, ex, comp_cache);
      pc.push_back(a[kHate] > a[kNotHate] ? kHate : kNotHate);
      const Vec b = frozen_classify(frozen, ex, &froz_cache);
      pf.push_back(b[kHate] > b[kNotHate] ? kHate : kNotHate);
    }
    const auto rc = evaluate(golds, pc);
    const auto rf = evaluate(golds, pf);
    comp.points.push_back({level, rc.macro_f1, rc.accuracy});
    froz.points.push_back({level, rf.macro_f1, rf.accuracy});
  }
  return {std::move(comp), std::move(froz)};
}

/// CSV: header model,noise_percent,macro_f1,accuracy; 6 decimals; LF.
inline void write_curves_csv(std::ostream &out, const std::vector<RobustnessCurve> &curves) {
  out << "model,noise_percent,macro_f1,accuracy\n";
  char buf[128];
  for (const auto &c : curves)
    for (const auto &p : c.points) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f\n", c.model.c_str(), p.level.percent(),
                    p.macro_f1, p.accuracy);
      out << buf;
    }
}

/// Frozen baseline over a checkpoint's parameters and word vocabulary.
inline FrozenModel make_frozen(const Checkpoint &ck) {
  const auto &w = ck.words.words();
  return FrozenModel(ck.params, std::unordered_set<std::string>(w.begin(), w.end()));
}

} // namespace comprnn
