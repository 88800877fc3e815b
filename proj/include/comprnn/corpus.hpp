// SPDX-License-Identifier: Apache-2.0
/**
 * @file   corpus.hpp
 * @brief  HatEval-style TSV ingestion, tokenization and vocabularies.
 *
 * Input files are UTF-8, tab separated, with a header row naming the columns
 * id, text, HS and optionally TR and AG (any order, case-insensitive). No
 * quoting is recognised. LF and CRLF line endings are accepted.
 */
#pragma once

#include "comprnn/error.hpp"
#include "comprnn/example.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace comprnn {

inline constexpr std::size_t kMaxWordChars = 50;
inline constexpr std::size_t kMaxSentenceWords = 100;
/// Stand-in word for text that tokenizes to nothing.
inline const std::string kEmptyPlaceholder = "\xE2\x88\x85"; // U+2205

struct RawRecord {
  std::string id;
  std::string text;
  std::optional<int> hs; ///< absent only for unlabeled prediction input
  std::optional<int> tr;
  std::optional<int> ag;
};

namespace detail {

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string lower_ascii(std::string s) {
  for (auto &c : s)
    if (c >= 'A' && c <= 'Z')
      c = static_cast<char>(c - 'A' + 'a');
  return s;
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); });
}

inline int parse_binary(const std::string &value, const char *column, std::size_t line,
                        const std::string &source) {
  if (value == "0")
    return 0;
  if (value == "1")
    return 1;
  throw DataError(source + ":" + std::to_string(line) + ": " + column + " value '" + value +
                  "' is not binary (expected 0 or 1)");
}

} // namespace detail

/// Parses TSV content. `source` names the input in error messages.
inline std::vector<RawRecord> parse_tsv(std::istream &in, const std::string &source,
                                        bool require_label = true) {
  std::string line;
  if (!std::getline(in, line))
    throw DataError(source + ": missing header row");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();

  std::unordered_map<std::string, std::size_t> col;
  const auto header = detail::split_tabs(line);
  for (std::size_t i = 0; i < header.size(); ++i)
    col.emplace(detail::lower_ascii(header[i]), i);
  auto find = [&](const char *name, bool required) -> std::optional<std::size_t> {
    auto it = col.find(detail::lower_ascii(name));
    if (it != col.end())
      return it->second;
    if (required)
      throw DataError(source + ": missing required column '" + std::string(name) + "'");
    return std::nullopt;
  };
  const auto c_id = *find("id", true);
  const auto c_text = *find("text", true);
  const auto c_hs = find("HS", require_label);
  const auto c_tr = find("TR", false);
  const auto c_ag = find("AG", false);

  std::vector<RawRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    auto fields = detail::split_tabs(line);
    if (fields.size() != header.size())
      throw DataError(source + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " tab-separated fields, found " +
                      std::to_string(fields.size()));
    RawRecord r;
    r.id = fields[c_id];
    r.text = fields[c_text];
    if (detail::is_blank(r.text))
      throw DataError(source + ":" + std::to_string(lineno) + ": empty text");
    if (c_hs)
      r.hs = detail::parse_binary(fields[*c_hs], "HS", lineno, source);
    if (c_tr)
      r.tr = detail::parse_binary(fields[*c_tr], "TR", lineno, source);
    if (c_ag)
      r.ag = detail::parse_binary(fields[*c_ag], "AG", lineno, source);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RawRecord> load_tsv(const std::filesystem::path &path,
                                       bool require_label = true) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError(path.string() + ": cannot open for reading");
  return parse_tsv(in, path.string(), require_label);
}

/// Writes records in the same TSV layout load_tsv reads (id, text, HS[, TR, AG]).
inline void write_tsv(std::ostream &out, const std::vector<RawRecord> &records) {
  const bool tr = std::any_of(records.begin(), records.end(), [](auto &r) { return r.tr.has_value(); });
  const bool ag = std::any_of(records.begin(), records.end(), [](auto &r) { return r.ag.has_value(); });
  out << "id\ttext\tHS" << (tr ? "\tTR" : "") << (ag ? "\tAG" : "") << '\n';
  for (const auto &r : records) {
    out << r.id << '\t' << r.text << '\t' << r.hs.value_or(0);
    if (tr)
      out << '\t' << r.tr.value_or(0);
    if (ag)
      out << '\t' << r.ag.value_or(0);
    out << '\n';
  }
}

/// Splits a UTF-8 string into code points, each re-encoded as UTF-8.
/// Ill-formed sequences become U+FFFD.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  const auto *p = reinterpret_cast<const uint8_t *>(s.data());
  const auto n = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0)
      c = 0xFFFD;
    char buf[4];
    int32_t len = 0;
    UBool err = false;
    U8_APPEND(reinterpret_cast<uint8_t *>(buf), len, 4, c, err);
    out.emplace_back(buf, static_cast<std::size_t>(len));
  }
  return out;
}

/// NFC normalization, root-locale lowercasing, split on Unicode whitespace.
/// Text with no words yields the single placeholder word.
inline std::vector<std::string> tokenize(std::string_view text) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2 *nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status))
    throw Error(std::string("tokenize: ICU NFC normalizer unavailable: ") + u_errorName(status));
  u = nfc->normalize(u, status);
  if (U_FAILURE(status))
    throw Error(std::string("tokenize: NFC normalization failed: ") + u_errorName(status));
  u.toLower(icu::Locale::getRoot());

  std::vector<std::string> words;
  icu::UnicodeString cur;
  auto flush = [&] {
    if (!cur.isEmpty()) {
      std::string w;
      cur.toUTF8String(w);
      words.push_back(std::move(w));
      cur.remove();
    }
  };
  for (int32_t i = 0; i < u.length();) {
    const UChar32 c = u.char32At(i);
    if (u_isUWhiteSpace(c))
      flush();
    else
      cur.append(c);
    i += U16_LENGTH(c);
  }
  flush();
  if (words.empty())
    words.push_back(kEmptyPlaceholder);
  return words;
}

/// tokenize followed by the length caps (100 words, 50 characters per word).
inline std::vector<std::string> tokenize_capped(std::string_view text) {
  auto words = tokenize(text);
  if (words.size() > kMaxSentenceWords)
    words.resize(kMaxSentenceWords);
  for (auto &w : words) {
    auto chars = utf8_chars(w);
    if (chars.size() > kMaxWordChars) {
      std::string t;
      for (std::size_t i = 0; i < kMaxWordChars; ++i)
        t += chars[i];
      w = std::move(t);
    }
  }
  return words;
}

/// Character vocabulary; index 0 is reserved for unknown characters.
class CharVocab {
public:
  CharVocab() = default;
  /// chars[i] receives index i + 1.
  explicit CharVocab(std::vector<std::string> chars) {
    for (auto &c : chars)
      add(c);
  }

  int add(const std::string &c) {
    auto [it, inserted] = index_.emplace(c, static_cast<int>(chars_.size()) + 1);
    if (inserted)
      chars_.push_back(c);
    return it->second;
  }

  int index_of(const std::string &c) const {
    auto it = index_.find(c);
    return it == index_.end() ? 0 : it->second;
  }

  /// Number of known characters (excluding the unknown slot).
  std::size_t size() const { return chars_.size(); }
  /// Embedding rows needed: size() + 1.
  std::size_t rows() const { return chars_.size() + 1; }
  const std::vector<std::string> &chars() const { return chars_; }

  std::vector<int> encode(std::string_view word) const {
    std::vector<int> ids;
    for (const auto &c : utf8_chars(word))
      ids.push_back(index_of(c));
    return ids;
  }

  bool operator==(const CharVocab &o) const { return chars_ == o.chars_; }

private:
  std::vector<std::string> chars_;
  std::unordered_map<std::string, int> index_;
};

/// Word surface forms, indexed by first occurrence.
class WordVocab {
public:
  WordVocab() = default;
  explicit WordVocab(std::vector<std::string> words) {
    for (auto &w : words)
      add(w);
  }

  int add(const std::string &w) {
    auto [it, inserted] = index_.emplace(w, static_cast<int>(words_.size()));
    if (inserted)
      words_.push_back(w);
    return it->second;
  }

  bool contains(const std::string &w) const { return index_.contains(w); }
  std::optional<int> index_of(const std::string &w) const {
    auto it = index_.find(w);
    if (it == index_.end())
      return std::nullopt;
    return it->second;
  }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string> &words() const { return words_; }

  bool operator==(const WordVocab &o) const { return words_ == o.words_; }

private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// A tokenized sentence with its label, before character encoding.
struct TokenizedExample {
  std::vector<std::string> words;
  int label = kNotHate;
};

/// Builds both vocabularies from training sentences, first-occurrence order.
inline std::pair<CharVocab, WordVocab>
build_vocabs(const std::vector<std::vector<std::string>> &sentences) {
  if (sentences.empty())
    throw DataError("build_vocabs: no training sentences");
  CharVocab cv;
  WordVocab wv;
  for (const auto &s : sentences)
    for (const auto &w : s) {
      wv.add(w);
      for (const auto &c : utf8_chars(w))
        cv.add(c);
    }
  return {std::move(cv), std::move(wv)};
}

inline std::pair<CharVocab, WordVocab>
build_vocabs(const std::vector<TokenizedExample> &examples) {
  std::vector<std::vector<std::string>> s;
  s.reserve(examples.size());
  for (const auto &e : examples)
    s.push_back(e.words);
  return build_vocabs(s);
}

inline Example encode_example(const std::vector<std::string> &words, int label,
                              const CharVocab &chars) {
  Example ex;
  ex.words = words;
  ex.label = label;
  ex.char_ids.reserve(words.size());
  for (const auto &w : words)
    ex.char_ids.push_back(chars.encode(w));
  return ex;
}

inline std::vector<Example> encode_examples(const std::vector<TokenizedExample> &in,
                                            const CharVocab &chars) {
  std::vector<Example> out;
  out.reserve(in.size());
  for (const auto &t : in)
    out.push_back(encode_example(t.words, t.label, chars));
  return out;
}

/// Tokenizes labeled records. Records without HS are rejected.
inline std::vector<TokenizedExample> tokenize_records(const std::vector<RawRecord> &records) {
  std::vector<TokenizedExample> out;
  out.reserve(records.size());
  for (const auto &r : records) {
    if (!r.hs)
      throw DataError("record '" + r.id + "' has no HS label");
    out.push_back({tokenize_capped(r.text), *r.hs});
  }
  return out;
}

} // namespace comprnn
