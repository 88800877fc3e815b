// SPDX-License-Identifier: Apache-2.0
/**
 * @file   metrics.hpp
 * @brief  Binary confusion counts, precision/recall/F1 and macro F1.
 *
 * HATE (1) is the positive class unless stated otherwise. Every 0/0 ratio
 * is defined as 0.
 */
#pragma once

#include "comprnn/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>

namespace comprnn {

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  /// Counts with the roles of the two classes exchanged.
  Confusion swapped() const { return {tn, fn, fp, tp}; }
  bool operator==(const Confusion &) const = default;
};

struct Prf1 {
  double precision = 0, recall = 0, f1 = 0;
};

inline Confusion confusion(std::span<const int> golds, std::span<const int> preds) {
  if (golds.size() != preds.size())
    throw DataError("confusion: " + std::to_string(golds.size()) + " gold labels but " +
                    std::to_string(preds.size()) + " predictions");
  if (golds.empty())
    throw DataError("confusion: no labels");
  Confusion c;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const int g = golds[i], p = preds[i];
    if ((g != 0 && g != 1) || (p != 0 && p != 1))
      throw DataError("confusion: non-binary entry at index " + std::to_string(i));
    if (g == 1)
      (p == 1 ? c.tp : c.fn)++;
    else
      (p == 1 ? c.fp : c.tn)++;
  }
  return c;
}

namespace detail {
inline double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
} // namespace detail

/// positive = 1 scores HATE, positive = 0 scores NOT.
inline Prf1 prf1(const Confusion &c, int positive = 1) {
  const Confusion k = positive == 1 ? c : c.swapped();
  Prf1 r;
  r.precision = detail::ratio(double(k.tp), double(k.tp + k.fp));
  r.recall = detail::ratio(double(k.tp), double(k.tp + k.fn));
  r.f1 = detail::ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

inline double macro_f1(const Confusion &c) { return (prf1(c, 1).f1 + prf1(c, 0).f1) / 2.0; }

inline double macro_f1(std::span<const int> golds, std::span<const int> preds) {
  return macro_f1(confusion(golds, preds));
}

inline double accuracy(const Confusion &c) {
  return double(c.tp + c.tn) / double(c.total());
}

struct EvalReport {
  Confusion confusion;
  Prf1 hate;     ///< positive class HATE
  Prf1 not_hate; ///< positive class NOT
  double macro_f1 = 0;
  double accuracy = 0;
  double error = 0;
};

inline EvalReport make_report(const Confusion &c) {
  EvalReport r;
  r.confusion = c;
  r.hate = prf1(c, 1);
  r.not_hate = prf1(c, 0);
  r.macro_f1 = (r.hate.f1 + r.not_hate.f1) / 2.0;
  r.accuracy = accuracy(c);
  r.error = 1.0 - r.accuracy;
  return r;
}

inline EvalReport evaluate(std::span<const int> golds, std::span<const int> preds) {
  return make_report(confusion(golds, preds));
}

inline nlohmann::ordered_json to_json(const EvalReport &r) {
  auto cls = [](const Prf1 &p) {
    return nlohmann::ordered_json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
  };
  nlohmann::ordered_json j;
  j["confusion"] = {{"tp", r.confusion.tp},
                    {"fp", r.confusion.fp},
                    {"fn", r.confusion.fn},
                    {"tn", r.confusion.tn}};
  j["per_class"] = {{"hate", cls(r.hate)}, {"not", cls(r.not_hate)}};
  j["macro_f1"] = r.macro_f1;
  j["accuracy"] = r.accuracy;
  j["error"] = r.error;
  return j;
}

/// Aligned plain-text rendering.
inline std::string to_table(const EvalReport &r) {
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-8s %10s %10s %10s\n", "class", "precision", "recall", "f1");
  out += buf;
  for (auto [name, p] : {std::pair{"HATE", &r.hate}, std::pair{"NOT", &r.not_hate}}) {
    std::snprintf(buf, sizeof buf, "%-8s %10.6f %10.6f %10.6f\n", name, p->precision, p->recall,
                  p->f1);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "macro_f1 %.6f  accuracy %.6f  error %.6f\n"
                "tp %llu  fp %llu  fn %llu  tn %llu\n",
                r.macro_f1, r.accuracy, r.error, (unsigned long long)r.confusion.tp,
                (unsigned long long)r.confusion.fp, (unsigned long long)r.confusion.fn,
                (unsigned long long)r.confusion.tn);
  out += buf;
  return out;
}

} // namespace comprnn
