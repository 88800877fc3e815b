// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  comprnn command line: train, eval, predict, export-encoder, noise,
 *         sweep and gradcheck.
 *
 * Exit codes: 0 success, 1 domain error (bad data, shape mismatch,
 * divergence, failed gradient check), 2 usage error. Progress goes to the
 * error stream; results go to files named by flags or to the output stream.
 */
#pragma once

#include "comprnn/comprnn.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace comprnn::cli {

namespace detail {

inline std::vector<TokenizedExample> load_labeled(const std::string &path) {
  return tokenize_records(load_tsv(path));
}

inline void write_text(const std::string &path, const std::string &content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(path + ": cannot open for writing");
  out << content;
  if (!out.flush())
    throw Error(path + ": write failed");
}

inline void emit(const std::optional<std::string> &path, const std::string &content,
                 std::ostream &out) {
  if (path)
    write_text(*path, content);
  else
    out << content;
}

inline std::vector<Example> encode_records(const std::vector<RawRecord> &recs,
                                           const CharVocab &chars) {
  std::vector<Example> xs;
  xs.reserve(recs.size());
  for (const auto &r : recs)
    xs.push_back(encode_example(tokenize_capped(r.text), r.hs.value_or(0), chars));
  return xs;
}

struct Flags {
  std::string train, dev, eval, config, out, checkpoint, encoder;
  std::optional<std::uint64_t> seed;
  std::string levels = "0..100:10";
  double tolerance = kDefaultGradcheckTolerance;
  std::string metric;
};

inline int cmd_train(const Flags &f, std::ostream &out, std::ostream &err) {
  TrainConfig cfg;
  if (!f.config.empty())
    cfg = load_config(f.config);
  if (f.seed)
    cfg.seed = *f.seed;
  if (!f.encoder.empty())
    cfg.transfer_source = f.encoder;
  if (!f.metric.empty())
    cfg.selection_metric = parse_selection_metric(f.metric);
  cfg.validate();

  const auto train_set = load_labeled(f.train);
  const auto dev_set = load_labeled(f.dev);
  err << "train: " << train_set.size() << " training / " << dev_set.size()
      << " dev examples, seed " << cfg.seed << ", " << cfg.max_epochs << " epochs\n";

  TrainOptions opts;
  opts.checkpoint_dir = f.out;
  opts.on_epoch = [&](const EpochRecord &r) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "epoch %3d  train_loss %.6f  train_acc %.4f  dev_error %.4f  dev_macro_f1 %.4f\n",
                  r.epoch, r.train_loss, r.train_accuracy, r.dev_error, r.dev_macro_f1);
    err << buf << std::flush;
  };
  const auto result = train(cfg, train_set, dev_set, opts);
  detail::write_text((std::filesystem::path(f.out) / "history.json").string(),
                     history_json(result.history).dump(2) + "\n");
  out << result.history[result.best_index].checkpoint << "\n";
  return 0;
}

inline int cmd_eval(const Flags &f, std::ostream &out, std::ostream &err) {
  const auto ck = load_checkpoint(f.checkpoint);
  const auto xs = encode_records(load_tsv(f.eval), ck.chars);
  const auto report = evaluate_model(ck.params, xs);
  err << to_table(report);
  emit(f.out.empty() ? std::nullopt : std::optional(f.out), to_json(report).dump(2) + "\n", out);
  return 0;
}

inline int cmd_predict(const Flags &f, std::ostream &out, std::ostream &) {
  const auto ck = load_checkpoint(f.checkpoint);
  const auto recs = load_tsv(f.eval, /*require_label=*/false);
  const auto xs = encode_records(recs, ck.chars);
  WordCache cache(ck.params);
  std::string text;
  char buf[64];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Vec p = classify_cached(ck.params, xs[i], cache);
    const int pred = p[kHate] > p[kNotHate] ? kHate : kNotHate;
    std::snprintf(buf, sizeof buf, "\t%d\t%.6f\n", pred, p[kHate]);
    text += recs[i].id + buf;
  }
  emit(f.out.empty() ? std::nullopt : std::optional(f.out), text, out);
  return 0;
}

inline int cmd_export(const Flags &f, std::ostream &, std::ostream &err) {
  const auto bundle = export_encoder(load_checkpoint(f.checkpoint));
  save_bundle(bundle, f.out);
  err << "export-encoder: wrote " << f.out << " (" << bundle.chars.size() << " characters)\n";
  return 0;
}

inline int cmd_noise(const Flags &f, std::ostream &, std::ostream &err) {
  const auto recs = load_tsv(f.eval);
  Sentences corpus;
  for (const auto &r : recs)
    corpus.push_back(tokenize_capped(r.text));
  const auto suite = make_suite(corpus, f.seed.value_or(0), parse_levels(f.levels), f.eval);
  for (const auto &[level, version] : suite.versions) {
    const std::string path = f.out + ".n" + std::to_string(level.percent());
    std::ostringstream ss;
    write_noisy_tsv(ss, version, recs);
    write_text(path, ss.str());
    err << "noise: wrote " << path << "\n";
  }
  return 0;
}

inline int cmd_sweep(const Flags &f, std::ostream &out, std::ostream &err) {
  const auto ck = load_checkpoint(f.checkpoint);
  const auto recs = load_tsv(f.eval);
  Sentences corpus;
  std::vector<int> golds;
  for (const auto &r : recs) {
    corpus.push_back(tokenize_capped(r.text));
    golds.push_back(*r.hs);
  }
  const auto suite = make_suite(corpus, f.seed.value_or(0), parse_levels(f.levels), f.eval);
  const auto frozen = make_frozen(ck);
  const auto [comp, froz] = sweep(ck.params, frozen, suite, golds, ck.chars);
  for (std::size_t i = 0; i < comp.points.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "noise %3d%%  compositional %.4f  frozen %.4f\n",
                  comp.points[i].level.percent(), comp.points[i].macro_f1,
                  froz.points[i].macro_f1);
    err << buf;
  }
  std::ostringstream csv;
  write_curves_csv(csv, {comp, froz});
  emit(f.out.empty() ? std::nullopt : std::optional(f.out), csv.str(), out);
  return 0;
}

inline int cmd_gradcheck(const Flags &f, std::ostream &out, std::ostream &err,
                         const AnalyticGradient &analytic) {
  const auto report = run_gradcheck_battery(f.seed.value_or(1), 5, analytic);
  char buf[256];
  bool ok = true;
  for (const auto &g : report.groups) {
    std::snprintf(buf, sizeof buf, "%-28s entries %5zu  max_rel_error %.3e\n", g.name.c_str(),
                  g.entries, g.max_rel_error);
    out << buf;
    if (!(g.max_rel_error < f.tolerance)) {
      ok = false;
      std::snprintf(buf, sizeof buf, "gradcheck: %s max relative error %.3e exceeds tolerance %.3e\n",
                    g.name.c_str(), g.max_rel_error, f.tolerance);
      err << buf;
    }
  }
  return ok ? 0 : 1;
}

} // namespace detail

/// Entry point. args excludes the program name. The analytic gradient used by
/// gradcheck can be substituted for fault-injection tests.
inline int run(const std::vector<std::string> &args, std::ostream &out = std::cout,
               std::ostream &err = std::cerr,
               const AnalyticGradient &analytic = analytic_gradient) {
  CLI::App app{"Compositional character-to-word-to-sentence GRU text classifier", "comprnn"};
  app.require_subcommand(1);
  detail::Flags f;

  auto *train = app.add_subcommand("train", "Train with per-epoch checkpoints and dev selection");
  train->add_option("--train", f.train, "Training TSV")->required();
  train->add_option("--dev", f.dev, "Development TSV")->required();
  train->add_option("--out", f.out, "Checkpoint directory")->required();
  train->add_option("--seed", f.seed, "Random seed (overrides config)");
  train->add_option("--config", f.config, "Flat JSON config file");
  train->add_option("--encoder", f.encoder, "Pre-trained encoder bundle to fine-tune");
  train->add_option("--metric", f.metric, "Dev selection metric")
      ->check(CLI::IsMember({"macro-f1", "pos-f1", "error"}));

  auto *eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled TSV");
  eval->add_option("--checkpoint", f.checkpoint)->required();
  eval->add_option("--eval", f.eval, "Labeled TSV")->required();
  eval->add_option("--out", f.out, "Report JSON path (default: standard output)");

  auto *predict = app.add_subcommand("predict", "Write id<TAB>prediction<TAB>p_hate lines");
  predict->add_option("--checkpoint", f.checkpoint)->required();
  predict->add_option("--eval", f.eval, "TSV with id and text columns")->required();
  predict->add_option("--out", f.out, "Output path (default: standard output)");

  auto *exp = app.add_subcommand("export-encoder", "Extract the char-to-word encoder bundle");
  exp->add_option("--checkpoint", f.checkpoint)->required();
  exp->add_option("--out", f.out, "Bundle path")->required();

  auto *noise = app.add_subcommand("noise", "Write noisy copies of a TSV corpus");
  noise->add_option("--eval", f.eval, "Labeled TSV")->required();
  noise->add_option("--out", f.out, "Output prefix; files get a .n<level> suffix")->required();
  noise->add_option("--seed", f.seed, "Noise seed");
  noise->add_option("--levels", f.levels, "Noise levels, e.g. 0..100:10");

  auto *sw = app.add_subcommand("sweep", "Robustness curves: compositional vs frozen");
  sw->add_option("--checkpoint", f.checkpoint)->required();
  sw->add_option("--eval", f.eval, "Labeled TSV")->required();
  sw->add_option("--seed", f.seed, "Noise seed");
  sw->add_option("--levels", f.levels, "Noise levels, e.g. 0..100:10");
  sw->add_option("--out", f.out, "Curve CSV path (default: standard output)");

  auto *gc = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  gc->add_option("--seed", f.seed, "First of five seeds");
  gc->add_option("--tolerance", f.tolerance, "Maximum relative error");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (*train)
      return detail::cmd_train(f, out, err);
    if (*eval)
      return detail::cmd_eval(f, out, err);
    if (*predict)
      return detail::cmd_predict(f, out, err);
    if (*exp)
      return detail::cmd_export(f, out, err);
    if (*noise)
      return detail::cmd_noise(f, out, err);
    if (*sw)
      return detail::cmd_sweep(f, out, err);
    if (*gc)
      return detail::cmd_gradcheck(f, out, err, analytic);
  } catch (const Error &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

} // namespace comprnn::cli
