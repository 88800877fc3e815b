// SPDX-License-Identifier: Apache-2.0
/**
 * @file   checkpoint.hpp
 * @brief  Versioned JSON checkpoints and char-to-word encoder bundles.
 *
 * Checkpoint layout (field order fixed):
 *
 *   {
 *     "format_version": 1,
 *     "kind": "comprnn.checkpoint",
 *     "shape": {char_emb_dim, hidden, layers_per_stack, directions,
 *               word_repr_dim, sent_repr_dim, classes, dropout_rate},
 *     "vocabularies": {"chars": [...], "words": [...]},
 *     "parameters": [{"name", "shape": [rows, cols] | [n], "data": [...]}, ...],
 *     "metadata": {...}
 *   }
 *
 * "chars" lists the characters with indices 1, 2, ...; index 0 (unknown) is
 * implicit. Parameter arrays are row-major, in for_each_array order. Floats
 * are written in the shortest decimal form that parses back to the same
 * double, so load(save(x)) is bit-exact.
 *
 * Encoder bundles use kind "comprnn.encoder_bundle", a shape object with
 * char_emb_dim, hidden and layers_per_stack, a "chars" vocabulary, the
 * char_embeddings and char_to_word.* arrays, and a "provenance" object.
 */
#pragma once

#include "comprnn/corpus.hpp"
#include "comprnn/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace comprnn {

using ojson = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char *kCheckpointKind = "comprnn.checkpoint";
inline constexpr const char *kBundleKind = "comprnn.encoder_bundle";

struct CheckpointMeta {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double dev_error = 0;
  double dev_macro_f1 = 0;
  double dev_pos_f1 = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  ojson config = ojson::object();
};

struct Checkpoint {
  int format_version = kFormatVersion;
  CharVocab chars;
  WordVocab words;
  ModelParams params;
  CheckpointMeta meta;
};

struct EncoderBundle {
  int format_version = kFormatVersion;
  ModelShape shape; ///< only char_emb_dim, hidden, layers_per_stack are meaningful
  CharVocab chars;
  Mat char_embeddings;
  BiGruStack char_to_word;
  ojson provenance = ojson::object();
};

/// Hex FNV-1a digest of a JSON value's compact dump.
inline std::string json_digest(const ojson &j) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)fnv1a64(j.dump()));
  return buf;
}

namespace detail {

template <class A> ojson array_json(const std::string &name, const A &a) {
  ojson j;
  j["name"] = name;
  if constexpr (A::ColsAtCompileTime == 1)
    j["shape"] = {a.size()};
  else
    j["shape"] = {a.rows(), a.cols()};
  std::vector<double> data(a.data(), a.data() + a.size());
  j["data"] = std::move(data);
  return j;
}

template <class A> void array_from_json(const ojson &j, const std::string &name, A &a) {
  if (!j.is_object() || j.value("name", "") != name)
    throw FormatError("parameter array '" + name + "' missing or out of order");
  const auto &shape = j.at("shape");
  const auto &data = j.at("data");
  Eigen::Index rows = 0, cols = 1;
  if constexpr (A::ColsAtCompileTime == 1) {
    if (shape.size() != 1)
      throw FormatError("parameter '" + name + "': expected 1-d shape");
    rows = shape[0].get<Eigen::Index>();
  } else {
    if (shape.size() != 2)
      throw FormatError("parameter '" + name + "': expected 2-d shape");
    rows = shape[0].get<Eigen::Index>();
    cols = shape[1].get<Eigen::Index>();
  }
  if (rows != a.rows() || cols != a.cols())
    throw FormatError("parameter '" + name + "': stored shape " + shape_str(rows, cols) +
                      " but model expects " + shape_str(a.rows(), a.cols()));
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != a.size())
    throw FormatError("parameter '" + name + "': data length does not match shape");
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const auto &v = data[static_cast<std::size_t>(i)];
    if (!v.is_number())
      throw FormatError("parameter '" + name + "': non-numeric entry at " + std::to_string(i));
    a.data()[i] = v.get<double>();
  }
}

inline ojson shape_json(const ModelShape &s) {
  return ojson{{"char_emb_dim", s.char_emb_dim},
               {"hidden", s.hidden},
               {"layers_per_stack", s.layers_per_stack},
               {"directions", ModelShape::directions},
               {"word_repr_dim", s.word_repr_dim()},
               {"sent_repr_dim", s.sent_repr_dim()},
               {"classes", ModelShape::classes},
               {"dropout_rate", s.dropout_rate}};
}

inline ModelShape shape_from_json(const ojson &j) {
  ModelShape s;
  s.char_emb_dim = j.at("char_emb_dim").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.layers_per_stack = j.at("layers_per_stack").get<int>();
  s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
  s.validate();
  return s;
}

inline void check_header(const ojson &j, const char *kind) {
  if (!j.is_object())
    throw FormatError("top-level JSON value is not an object");
  if (!j.contains("format_version") || !j["format_version"].is_number_integer())
    throw FormatError("missing format_version");
  const int v = j["format_version"].get<int>();
  if (v != kFormatVersion)
    throw FormatError("unsupported format_version " + std::to_string(v) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  if (j.value("kind", "") != kind)
    throw FormatError("expected kind '" + std::string(kind) + "', found '" +
                      j.value("kind", "") + "'");
}

inline ojson parse_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError(path.string() + ": cannot open for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return ojson::parse(ss.str());
  } catch (const nlohmann::json::parse_error &e) {
    throw FormatError(path.string() + ": corrupt JSON at byte " + std::to_string(e.byte) +
                      ": " + e.what());
  }
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_atomic(const std::filesystem::path &path, const std::string &content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw Error(tmp.string() + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out)
      throw Error(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw Error(path.string() + ": rename failed: " + ec.message());
}

template <class F> auto rethrow_as_format(const std::string &where, F &&f) {
  try {
    return f();
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(where + ": " + e.what());
  }
}

} // namespace detail

inline ojson to_json(const Checkpoint &ck) {
  ojson j;
  j["format_version"] = ck.format_version;
  j["kind"] = kCheckpointKind;
  j["shape"] = detail::shape_json(ck.params.shape);
  j["vocabularies"] = {{"chars", ck.chars.chars()}, {"words", ck.words.words()}};
  ojson arrays = ojson::array();
  for_each_array(ck.params, [&](const std::string &name, const auto &a) {
    arrays.push_back(detail::array_json(name, a));
  });
  j["parameters"] = std::move(arrays);
  const auto &m = ck.meta;
  j["metadata"] = {{"epoch", m.epoch},
                   {"train_loss", m.train_loss},
                   {"train_accuracy", m.train_accuracy},
                   {"dev_error", m.dev_error},
                   {"dev_macro_f1", m.dev_macro_f1},
                   {"dev_pos_f1", m.dev_pos_f1},
                   {"seed", m.seed},
                   {"config_digest", m.config_digest},
                   {"config", m.config}};
  return j;
}

inline Checkpoint checkpoint_from_json(const ojson &j) {
  detail::check_header(j, kCheckpointKind);
  return detail::rethrow_as_format("checkpoint", [&] {
    Checkpoint ck;
    const ModelShape shape = detail::shape_from_json(j.at("shape"));
    ck.chars = CharVocab(j.at("vocabularies").at("chars").get<std::vector<std::string>>());
    ck.words = WordVocab(j.at("vocabularies").at("words").get<std::vector<std::string>>());
    ck.params = zero_model(shape, static_cast<Eigen::Index>(ck.chars.rows()));
    const auto &arrays = j.at("parameters");
    std::size_t i = 0;
    for_each_array(ck.params, [&](const std::string &name, auto &a) {
      if (i >= arrays.size())
        throw FormatError("checkpoint: parameter '" + name + "' missing");
      detail::array_from_json(arrays[i++], name, a);
    });
    if (i != arrays.size())
      throw FormatError("checkpoint: unexpected extra parameter arrays");
    const auto &m = j.at("metadata");
    ck.meta.epoch = m.at("epoch").get<int>();
    ck.meta.train_loss = m.at("train_loss").get<double>();
    ck.meta.train_accuracy = m.at("train_accuracy").get<double>();
    ck.meta.dev_error = m.at("dev_error").get<double>();
    ck.meta.dev_macro_f1 = m.at("dev_macro_f1").get<double>();
    ck.meta.dev_pos_f1 = m.at("dev_pos_f1").get<double>();
    ck.meta.seed = m.at("seed").get<std::uint64_t>();
    ck.meta.config_digest = m.at("config_digest").get<std::string>();
    ck.meta.config = m.at("config");
    return ck;
  });
}

inline std::string serialize(const Checkpoint &ck) { return to_json(ck).dump() + "\n"; }

inline void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) {
  detail::write_atomic(path, serialize(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  const auto j = detail::parse_file(path);
  try {
    return checkpoint_from_json(j);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline ojson to_json(const EncoderBundle &b) {
  ojson j;
  j["format_version"] = b.format_version;
  j["kind"] = kBundleKind;
  j["shape"] = {{"char_emb_dim", b.shape.char_emb_dim},
                {"hidden", b.shape.hidden},
                {"layers_per_stack", b.shape.layers_per_stack}};
  j["chars"] = b.chars.chars();
  ojson arrays = ojson::array();
  arrays.push_back(detail::array_json("char_embeddings", b.char_embeddings));
  // Reuse the model visitor so names match checkpoint arrays.
  ModelParams view;
  view.char_to_word = b.char_to_word;
  for_each_array(view, [&](const std::string &name, const auto &a) {
    if (name.starts_with("char_to_word."))
      arrays.push_back(detail::array_json(name, a));
  });
  j["parameters"] = std::move(arrays);
  j["provenance"] = b.provenance;
  return j;
}

inline EncoderBundle bundle_from_json(const ojson &j) {
  detail::check_header(j, kBundleKind);
  return detail::rethrow_as_format("encoder bundle", [&] {
    EncoderBundle b;
    b.shape = detail::shape_from_json(j.at("shape"));
    b.chars = CharVocab(j.at("chars").get<std::vector<std::string>>());
    b.char_embeddings =
        Mat::Zero(static_cast<Eigen::Index>(b.chars.rows()), b.shape.char_emb_dim);
    b.char_to_word = make_stack(b.shape.char_emb_dim, b.shape.hidden, b.shape.layers_per_stack);
    const auto &arrays = j.at("parameters");
    std::size_t i = 0;
    if (arrays.empty())
      throw FormatError("encoder bundle: no parameter arrays");
    detail::array_from_json(arrays[i++], "char_embeddings", b.char_embeddings);
    ModelParams view;
    view.char_to_word = std::move(b.char_to_word);
    for_each_array(view, [&](const std::string &name, auto &a) {
      if (!name.starts_with("char_to_word."))
        return;
      if (i >= arrays.size())
        throw FormatError("encoder bundle: parameter '" + name + "' missing");
      detail::array_from_json(arrays[i++], name, a);
    });
    if (i != arrays.size())
      throw FormatError("encoder bundle: unexpected extra parameter arrays");
    b.char_to_word = std::move(view.char_to_word);
    b.provenance = j.value("provenance", ojson::object());
    return b;
  });
}

inline void save_bundle(const EncoderBundle &b, const std::filesystem::path &path) {
  detail::write_atomic(path, to_json(b).dump() + "\n");
}

inline EncoderBundle load_bundle(const std::filesystem::path &path) {
  const auto j = detail::parse_file(path);
  try {
    return bundle_from_json(j);
  } catch (const FormatError &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Char vocabulary, embeddings and char-to-word stack of a checkpoint.
inline EncoderBundle export_encoder(const Checkpoint &ck) {
  if (ck.format_version != kFormatVersion)
    throw FormatError("export_encoder: checkpoint format_version " +
                      std::to_string(ck.format_version) + " not supported");
  EncoderBundle b;
  b.shape = ck.params.shape;
  b.chars = ck.chars;
  b.char_embeddings = ck.params.char_embeddings;
  b.char_to_word = ck.params.char_to_word;
  b.provenance = {{"source_epoch", ck.meta.epoch},
                  {"source_seed", ck.meta.seed},
                  {"source_config_digest", ck.meta.config_digest}};
  return b;
}

} // namespace comprnn
