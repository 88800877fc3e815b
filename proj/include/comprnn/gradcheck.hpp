// SPDX-License-Identifier: Apache-2.0
/**
 * @file   gradcheck.hpp
 * @brief  Analytic-vs-finite-difference gradient comparison on downsized
 *         models.
 *
 * Relative error of one coordinate is |a - n| / max(|a|, |n|, kRelErrorFloor)
 * with a the analytic and n the central-difference derivative.
 */
#pragma once

#include "comprnn/model.hpp"

#include <algorithm>
#include <functional>

namespace comprnn {

inline constexpr double kRelErrorFloor = 1e-6;
inline constexpr double kDefaultGradcheckStep = 1e-5;
inline constexpr double kDefaultGradcheckTolerance = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
}

struct GradcheckGroup {
  std::string name;
  std::size_t entries = 0;
  double max_rel_error = 0;
  double max_abs_error = 0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;

  double max_rel_error() const {
    double m = 0;
    for (const auto &g : groups)
      m = std::max(m, g.max_rel_error);
    return m;
  }
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }

  /// Element-wise max with another report over the same groups.
  void merge(const GradcheckReport &o) {
    if (groups.empty()) {
      groups = o.groups;
      return;
    }
    for (const auto &g : o.groups) {
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const auto &x) { return x.name == g.name; });
      if (it == groups.end()) {
        groups.push_back(g);
        continue;
      }
      it->entries += g.entries;
      it->max_rel_error = std::max(it->max_rel_error, g.max_rel_error);
      it->max_abs_error = std::max(it->max_abs_error, g.max_abs_error);
    }
  }
};

/// Analytic gradient of the summed loss over examples, accumulated into grad.
using AnalyticGradient =
    std::function<double(const ModelParams &, const std::vector<Example> &, Gradients &)>;

/// Backward with dropout switched off (the model's dropout_rate must be 0).
inline double analytic_gradient(const ModelParams &m, const std::vector<Example> &xs,
                                Gradients &grad) {
  if (m.shape.dropout_rate != 0.0)
    throw Error("gradcheck: dropout must be disabled");
  double loss = 0.0;
  Rng unused(0);
  for (const auto &x : xs)
    loss += backward(m, x, unused, grad);
  return loss;
}

inline double total_eval_loss(const ModelParams &m, const std::vector<Example> &xs) {
  double loss = 0.0;
  for (const auto &x : xs)
    loss += eval_loss(m, x);
  return loss;
}

/// Compares every parameter array against finite_diff of the summed loss.
inline GradcheckReport gradcheck(const ModelParams &m, const std::vector<Example> &xs,
                                 double h = kDefaultGradcheckStep,
                                 const AnalyticGradient &analytic = analytic_gradient) {
  Gradients g = zeros_like(m);
  analytic(m, xs, g);

  GradcheckReport report;
  ModelParams probe = m;
  std::vector<std::pair<std::string, std::span<const double>>> grads;
  for_each_array(g, [&](const std::string &name, const auto &a) {
    grads.emplace_back(name, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
  });
  std::size_t k = 0;
  for_each_array(probe, [&](const std::string &name, auto &a) {
    const auto analytic_g = grads[k++].second;
    Vec x = Eigen::Map<const Vec>(a.data(), a.size());
    auto loss_at = [&](const Vec &v) {
      Eigen::Map<Vec>(a.data(), a.size()) = v;
      return total_eval_loss(probe, xs);
    };
    const Vec numeric = finite_diff(loss_at, x, h);
    Eigen::Map<Vec>(a.data(), a.size()) = x;
    GradcheckGroup grp{name, static_cast<std::size_t>(a.size()), 0, 0};
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
      const double an = analytic_g[static_cast<std::size_t>(i)];
      grp.max_rel_error = std::max(grp.max_rel_error, relative_error(an, numeric[i]));
      grp.max_abs_error = std::max(grp.max_abs_error, std::abs(an - numeric[i]));
    }
    report.groups.push_back(grp);
  });
  return report;
}

struct GradcheckCase {
  ModelParams params;
  std::vector<Example> examples;
};

/// Downsized model (emb 3, hidden 4, no dropout) with random weights and
/// biases, and two random sentences of 1-3 words of 1-4 characters drawn
/// from a 5-character vocabulary plus the unknown slot.
inline GradcheckCase make_gradcheck_case(std::uint64_t seed, int layers) {
  ModelShape shape;
  shape.char_emb_dim = 3;
  shape.hidden = 4;
  shape.layers_per_stack = layers;
  shape.dropout_rate = 0.0;
  const Rng root(seed);
  GradcheckCase c;
  c.params = init_model(shape, 6, root.fork("params"));
  Rng br = root.fork("biases");
  for_each_array(c.params, [&](const std::string &name, auto &a) {
    if (name.ends_with(".b") || name == "head_b")
      for (Eigen::Index i = 0; i < a.size(); ++i)
        a.data()[i] = br.uniform01() - 0.5;
  });
  Rng xr = root.fork("examples");
  for (int e = 0; e < 2; ++e) {
    Example ex;
    const auto words = 1 + xr.uniform_below(3);
    for (std::uint64_t w = 0; w < words; ++w) {
      std::vector<int> chars(1 + xr.uniform_below(4));
      for (auto &ch : chars)
        ch = static_cast<int>(xr.uniform_below(6));
      ex.words.push_back("w" + std::to_string(w));
      ex.char_ids.push_back(std::move(chars));
    }
    ex.label = static_cast<int>(xr.uniform_below(2));
    c.examples.push_back(std::move(ex));
  }
  return c;
}

/// The standard battery: 1- and 2-layer stacks for seeds seed .. seed+seeds-1.
inline GradcheckReport run_gradcheck_battery(std::uint64_t seed, int seeds = 5,
                                             const AnalyticGradient &analytic = analytic_gradient) {
  GradcheckReport all;
  for (int layers : {1, 2})
    for (int s = 0; s < seeds; ++s) {
      const auto c = make_gradcheck_case(seed + static_cast<std::uint64_t>(s), layers);
      all.merge(gradcheck(c.params, c.examples, kDefaultGradcheckStep, analytic));
    }
  return all;
}

} // namespace comprnn
