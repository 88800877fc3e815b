// SPDX-License-Identifier: Apache-2.0
// Synthetic corpora and independent oracles shared by the test binaries.
#pragma once

#include "comprnn/comprnn.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace comprnn::testing {

inline ModelShape tiny_shape(double dropout = 0.5) {
  ModelShape s;
  s.char_emb_dim = 4;
  s.hidden = 5;
  s.layers_per_stack = 2;
  s.dropout_rate = dropout;
  return s;
}

/// Distinct random lowercase words with lengths in [min_len, max_len].
inline std::vector<std::string> random_words(Rng &rng, std::size_t count, int min_len,
                                             int max_len, std::set<std::string> &taken) {
  std::vector<std::string> out;
  while (out.size() < count) {
    const auto len = min_len + static_cast<int>(rng.uniform_below(max_len - min_len + 1));
    std::string w;
    for (int i = 0; i < len; ++i)
      w += static_cast<char>('a' + rng.uniform_below(26));
    if (taken.insert(w).second)
      out.push_back(w);
  }
  return out;
}

struct KeywordTask {
  std::vector<std::string> markers;
  std::vector<std::string> fillers;
  std::vector<TokenizedExample> train, dev, test;
};

/// Binary keyword task: a sentence is HATE iff it contains one of the marker
/// words. Sentences hold 4-8 words; positives contain exactly one marker.
inline KeywordTask keyword_task(std::uint64_t seed, std::size_t n_train, std::size_t n_dev,
                                std::size_t n_test, std::size_t n_markers = 20,
                                std::size_t n_fillers = 480) {
  Rng rng = Rng(seed).fork("keyword-task");
  KeywordTask task;
  std::set<std::string> taken;
  task.markers = random_words(rng, n_markers, 4, 7, taken);
  task.fillers = random_words(rng, n_fillers, 3, 7, taken);
  auto make = [&](std::size_t n) {
    std::vector<TokenizedExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      TokenizedExample ex;
      const auto len = 4 + rng.uniform_below(5);
      for (std::uint64_t w = 0; w < len; ++w)
        ex.words.push_back(task.fillers[rng.uniform_below(task.fillers.size())]);
      ex.label = static_cast<int>(rng.uniform_below(2));
      if (ex.label == kHate)
        ex.words[rng.uniform_below(len)] = task.markers[rng.uniform_below(task.markers.size())];
      out.push_back(std::move(ex));
    }
    return out;
  };
  task.train = make(n_train);
  task.dev = make(n_dev);
  task.test = make(n_test);
  return task;
}

/// The 20-example separable corpus: label 1 iff the sentence contains "hate".
inline std::vector<TokenizedExample> separable_corpus() {
  const std::vector<std::string> fill = {"the", "cat", "sat", "on", "mat", "dog", "ran", "far"};
  std::vector<TokenizedExample> out;
  for (int i = 0; i < 20; ++i) {
    TokenizedExample ex;
    for (int w = 0; w < 3; ++w)
      ex.words.push_back(fill[(i * 3 + w * 5) % fill.size()]);
    ex.label = i % 2;
    if (ex.label == kHate)
      ex.words[static_cast<std::size_t>(i / 2) % 3] = "hate";
    out.push_back(std::move(ex));
  }
  return out;
}

inline std::vector<RawRecord> to_records(const std::vector<TokenizedExample> &xs,
                                         const std::string &prefix = "r") {
  std::vector<RawRecord> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::string text;
    for (const auto &w : xs[i].words)
      text += (text.empty() ? "" : " ") + w;
    out.push_back({prefix + std::to_string(i), text, xs[i].label, std::nullopt, std::nullopt});
  }
  return out;
}

inline void write_corpus(const std::filesystem::path &path,
                         const std::vector<TokenizedExample> &xs) {
  std::ofstream out(path, std::ios::binary);
  write_tsv(out, to_records(xs));
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("comprnn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Levenshtein distance over code points, textbook dynamic programme.
inline std::size_t levenshtein(const std::string &a, const std::string &b) {
  const auto x = utf8_chars(a), y = utf8_chars(b);
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j)
    prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[y.size()];
}

/// Brute-force macro F1 and accuracy, written without the library's
/// Confusion / prf1 code path.
struct BruteScores {
  double p1, r1, f1_hate, f1_not, macro, acc;
};

inline BruteScores brute_scores(const std::vector<int> &gold, const std::vector<int> &pred) {
  auto f1_for = [&](int cls, double &p, double &r) {
    int pred_pos = 0, gold_pos = 0, hit = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      pred_pos += pred[i] == cls;
      gold_pos += gold[i] == cls;
      hit += pred[i] == cls && gold[i] == cls;
    }
    p = pred_pos ? double(hit) / pred_pos : 0.0;
    r = gold_pos ? double(hit) / gold_pos : 0.0;
    return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  };
  BruteScores s{};
  double p0, r0;
  s.f1_hate = f1_for(1, s.p1, s.r1);
  s.f1_not = f1_for(0, p0, r0);
  s.macro = (s.f1_hate + s.f1_not) / 2;
  int same = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    same += gold[i] == pred[i];
  s.acc = double(same) / double(gold.size());
  return s;
}

} // namespace comprnn::testing
