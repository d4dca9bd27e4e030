// Copyright 2026 The rnnt-oov Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef RNNT_OOV_TOKENIZER_HPP
#define RNNT_OOV_TOKENIZER_HPP

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rnnt_oov/errors.hpp"

namespace rnnt_oov {

using TokenSeq = std::vector<int>;

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Lowercases ASCII letters, collapses whitespace runs to one space, trims.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : ch);
  }
  return out;
}

/// Words of the normalized text.
inline std::vector<std::string> split_words(std::string_view text) {
  const std::string norm = normalize_text(text);
  std::vector<std::string> words;
  size_t start = 0;
  while (start < norm.size()) {
    size_t end = norm.find(' ', start);
    if (end == std::string::npos) end = norm.size();
    words.push_back(norm.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

/// Splits UTF-8 text into code points (each returned as its byte string).
inline std::vector<std::string> split_utf8(std::string_view text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    else if (lead >= 0x80) throw ArgumentError("invalid UTF-8 lead byte in text");
    if (i + len > text.size()) throw ArgumentError("truncated UTF-8 sequence in text");
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

enum class VocabMode { character, subword };

inline std::string_view vocab_mode_name(VocabMode m) {
  return m == VocabMode::character ? "character" : "subword";
}

/// Output inventory. Id 0 is the blank symbol and is never produced by encode.
class Vocab {
 public:
  static constexpr int kBlank = 0;
  static constexpr std::string_view kBlankUnit = "<blank>";
  static constexpr std::string_view kWordSeparator = " ";

  Vocab() = default;

  /// units excludes blank; they receive ids 1..n in order.
  Vocab(VocabMode mode, const std::vector<std::string> &units) : mode_(mode) {
    for (const auto &u : units) {
      if (u.empty()) throw ArgumentError("Vocab: empty unit");
      if (u == kBlankUnit) throw ArgumentError("Vocab: unit collides with blank");
      if (!index_.emplace(u, static_cast<int>(units_.size())).second) {
        throw ArgumentError("Vocab: duplicate unit '" + u + "'");
      }
      max_unit_chars_ = std::max(max_unit_chars_, split_utf8(u).size());
      units_.push_back(u);
    }
  }

  VocabMode mode() const { return mode_; }
  /// Number of ids including blank (V + 1).
  size_t size() const { return units_.size(); }
  /// Number of non-blank labels (V).
  size_t label_count() const { return units_.size() - 1; }
  size_t max_unit_chars() const { return max_unit_chars_; }

  const std::string &unit(int id) const {
    if (id < 0 || static_cast<size_t>(id) >= units_.size()) {
      throw ArgumentError("Vocab: id out of range: " + std::to_string(id));
    }
    return units_[static_cast<size_t>(id)];
  }

  std::optional<int> find(const std::string &unit) const {
    auto it = index_.find(unit);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string &unit) const {
    auto f = find(unit);
    if (!f) throw ArgumentError("Vocab: unknown unit '" + unit + "'");
    return *f;
  }

  /// Units without blank.
  std::vector<std::string> labels() const {
    return std::vector<std::string>(units_.begin() + 1, units_.end());
  }

  nlohmann::json to_json() const {
    return {{"mode", vocab_mode_name(mode_)}, {"units", labels()}};
  }

  static Vocab from_json(const nlohmann::json &j) {
    try {
      const std::string mode = j.at("mode").get<std::string>();
      if (mode != "character" && mode != "subword") throw FormatError("vocab: unknown mode " + mode);
      return Vocab(mode == "character" ? VocabMode::character : VocabMode::subword,
                   j.at("units").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception &e) {
      throw FormatError(std::string("vocab: malformed JSON: ") + e.what());
    }
  }

  void save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab file " + path.string());
    out << to_json().dump(1) << '\n';
  }

  static Vocab load(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocab file " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception &e) {
      throw FormatError("vocab: " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  friend bool operator==(const Vocab &a, const Vocab &b) {
    return a.mode_ == b.mode_ && a.units_ == b.units_;
  }

 private:
  VocabMode mode_ = VocabMode::character;
  std::vector<std::string> units_{std::string(kBlankUnit)};
  std::map<std::string, int> index_;
  size_t max_unit_chars_ = 0;
};

/// Reads a subword inventory: UTF-8, one unit per line, no blank or duplicate lines.
inline std::vector<std::string> read_subword_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read subword file " + path.string());
  std::vector<std::string> units;
  std::set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (line.empty()) throw FormatError(where + ": blank line in subword file");
    if (std::any_of(line.begin(), line.end(),
                    [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
      throw FormatError(where + ": subword unit contains whitespace");
    }
    split_utf8(line);
    if (!seen.insert(line).second) throw FormatError(where + ": duplicate unit '" + line + "'");
    units.push_back(line);
  }
  if (units.empty()) throw FormatError("subword file is empty: " + path.string());
  return units;
}

inline Vocab build_vocab(const std::vector<std::string> &corpus_texts, VocabMode mode,
                         const std::optional<std::filesystem::path> &subword_file = std::nullopt) {
  if (corpus_texts.empty()) throw ArgumentError("build_vocab: empty corpus");
  if (mode == VocabMode::subword && !subword_file) {
    throw ArgumentError("build_vocab: subword mode requires a subword file");
  }
  if (mode == VocabMode::character && subword_file) {
    throw ArgumentError("build_vocab: subword file given in character mode");
  }
  std::set<std::string> chars;
  bool has_space = false;
  for (const auto &t : corpus_texts) {
    for (auto &cp : split_utf8(normalize_text(t))) {
      if (cp == " ") has_space = true;
      chars.insert(std::move(cp));
    }
  }
  if (chars.empty()) throw ArgumentError("build_vocab: corpus contains no characters");

  if (mode == VocabMode::character) {
    return Vocab(mode, std::vector<std::string>(chars.begin(), chars.end()));
  }

  std::vector<std::string> units = read_subword_file(*subword_file);
  std::set<std::string> present(units.begin(), units.end());
  if (has_space) {
    units.emplace_back(Vocab::kWordSeparator);
    present.emplace(Vocab::kWordSeparator);
  }
  for (const auto &c : chars) {
    if (present.insert(c).second) units.push_back(c);
  }
  return Vocab(mode, units);
}

/// Character mode maps code points one to one. Subword mode segments each word
/// by greedy longest match and inserts the separator unit between words.
inline TokenSeq encode(std::string_view text, const Vocab &vocab) {
  const std::string norm = normalize_text(text);
  if (norm.empty()) throw ArgumentError("encode: empty text");
  TokenSeq out;
  if (vocab.mode() == VocabMode::character) {
    for (const auto &cp : split_utf8(norm)) {
      auto id = vocab.find(cp);
      if (!id) throw CoverageError(cp);
      out.push_back(*id);
    }
    return out;
  }

  const int separator = vocab.id(std::string(Vocab::kWordSeparator));
  bool first = true;
  for (const auto &word : split_words(norm)) {
    if (!first) out.push_back(separator);
    first = false;
    const std::vector<std::string> cps = split_utf8(word);
    size_t pos = 0;
    while (pos < cps.size()) {
      const size_t longest = std::min(vocab.max_unit_chars(), cps.size() - pos);
      bool matched = false;
      for (size_t len = longest; len >= 1; --len) {
        std::string candidate;
        for (size_t k = pos; k < pos + len; ++k) candidate += cps[k];
        if (auto id = vocab.find(candidate); id && *id != separator) {
          out.push_back(*id);
          pos += len;
          matched = true;
          break;
        }
      }
      if (!matched) throw CoverageError(cps[pos]);
    }
  }
  return out;
}

inline std::string decode(const TokenSeq &tokens, const Vocab &vocab) {
  std::string out;
  for (int id : tokens) {
    if (id == Vocab::kBlank) throw ArgumentError("decode: blank id in token sequence");
    out += vocab.unit(id);
  }
  return out;
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_TOKENIZER_HPP
