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

#ifndef RNNT_OOV_DATASET_HPP
#define RNNT_OOV_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/tokenizer.hpp"

namespace rnnt_oov {

struct Utterance {
  std::string id;
  std::string text;  // normalized
  std::filesystem::path features_path;

  friend bool operator==(const Utterance &, const Utterance &) = default;
};

/// Ordered utterance list. Relative feature paths resolve against root().
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::filesystem::path root) : root_(std::move(root)) {}

  void add(Utterance u) {
    if (u.id.empty()) throw ArgumentError("manifest: empty utterance id");
    if (u.id.find_first_of("\t\n") != std::string::npos) {
      throw ArgumentError("manifest: id contains tab or newline: " + u.id);
    }
    u.text = normalize_text(u.text);
    if (u.text.empty()) throw ArgumentError("manifest: empty transcript for " + u.id);
    if (!ids_.insert(u.id).second) throw ArgumentError("manifest: duplicate id " + u.id);
    utts_.push_back(std::move(u));
  }

  size_t size() const { return utts_.size(); }
  bool empty() const { return utts_.empty(); }
  const Utterance &operator[](size_t i) const { return utts_[i]; }
  std::vector<Utterance>::const_iterator begin() const { return utts_.begin(); }
  std::vector<Utterance>::const_iterator end() const { return utts_.end(); }
  bool contains(const std::string &id) const { return ids_.count(id) != 0; }

  const std::filesystem::path &root() const { return root_; }
  void set_root(std::filesystem::path root) { root_ = std::move(root); }

  std::filesystem::path features_file(const Utterance &u) const {
    return u.features_path.is_absolute() ? u.features_path : root_ / u.features_path;
  }

  std::vector<std::string> texts() const {
    std::vector<std::string> out;
    out.reserve(utts_.size());
    for (const auto &u : utts_) out.push_back(u.text);
    return out;
  }

  /// Same root, selected utterances in the given order.
  Manifest subset(const std::vector<size_t> &indices) const {
    Manifest m(root_);
    for (size_t i : indices) m.add(utts_.at(i));
    return m;
  }

  static Manifest load(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    Manifest m(path.parent_path());
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const std::string where = path.string() + ":" + std::to_string(lineno);
      const size_t a = line.find('\t');
      const size_t b = a == std::string::npos ? a : line.find('\t', a + 1);
      if (b == std::string::npos) throw FormatError(where + ": expected id<TAB>features<TAB>text");
      try {
        m.add({line.substr(0, a), line.substr(b + 1), line.substr(a + 1, b - a - 1)});
      } catch (const ArgumentError &e) {
        throw FormatError(where + ": " + e.what());
      }
    }
    return m;
  }

  /// Writes the manifest. Feature paths are written as stored.
  void save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "# id\tfeatures\ttranscript\n";
    for (const auto &u : utts_) {
      out << u.id << '\t' << u.features_path.generic_string() << '\t' << u.text << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
  }

  friend bool operator==(const Manifest &a, const Manifest &b) { return a.utts_ == b.utts_; }

 private:
  std::filesystem::path root_;
  std::vector<Utterance> utts_;
  std::unordered_set<std::string> ids_;
};

// ---------------------------------------------------------------------------
// OOV words
// ---------------------------------------------------------------------------

struct OovList {
  std::set<std::string> words;
  size_t min_count = 3;

  bool contains(const std::string &w) const { return words.count(w) != 0; }

  void save(const std::filesystem::path &path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write OOV list " + path.string());
    for (const auto &w : words) out << w << '\n';
  }

  static OovList load(const std::filesystem::path &path, size_t min_count = 3) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read OOV list " + path.string());
    OovList l;
    l.min_count = min_count;
    std::string line;
    while (std::getline(in, line)) {
      line = normalize_text(line);
      if (line.empty()) continue;
      if (line.find(' ') != std::string::npos) throw FormatError("OOV list: entry is not one word: " + line);
      l.words.insert(line);
    }
    return l;
  }
};

/// Word counts over normalized, whitespace-split texts.
inline std::map<std::string, size_t> word_counts(const std::vector<std::string> &texts) {
  std::map<std::string, size_t> counts;
  for (const auto &t : texts) {
    for (auto &w : split_words(t)) ++counts[w];
  }
  return counts;
}

/// Words absent from train_texts that occur at least min_count times in probe_texts.
inline OovList extract_oov(const std::vector<std::string> &train_texts,
                           const std::vector<std::string> &probe_texts, size_t min_count = 3) {
  if (train_texts.empty() || probe_texts.empty()) throw ArgumentError("extract_oov: empty text set");
  if (min_count < 1) throw ArgumentError("extract_oov: min_count must be >= 1");
  const auto known = word_counts(train_texts);
  OovList out;
  out.min_count = min_count;
  for (const auto &[w, n] : word_counts(probe_texts)) {
    if (n >= min_count && known.count(w) == 0) out.words.insert(w);
  }
  return out;
}

inline bool contains_oov(const std::string &text, const OovList &oov) {
  for (const auto &w : split_words(text)) {
    if (oov.contains(w)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Subsets
// ---------------------------------------------------------------------------

inline Manifest select_oov_utterances(const Manifest &m, const OovList &oov) {
  std::vector<size_t> keep;
  for (size_t i = 0; i < m.size(); ++i) {
    if (contains_oov(m[i].text, oov)) keep.push_back(i);
  }
  return m.subset(keep);
}

/// Seeded uniform sample of n utterances without replacement, in manifest order.
inline Manifest downsample(const Manifest &m, size_t n, uint64_t seed) {
  if (n > m.size()) throw ArgumentError("downsample: n exceeds manifest size");
  std::vector<size_t> idx(m.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first n slots become the sample.
  for (size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(m.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return m.subset(idx);
}

inline Manifest complement(const Manifest &m, const Manifest &sub) {
  for (const auto &u : sub) {
    if (!m.contains(u.id)) throw ArgumentError("complement: id not in manifest: " + u.id);
  }
  std::vector<size_t> keep;
  for (size_t i = 0; i < m.size(); ++i) {
    if (!sub.contains(m[i].id)) keep.push_back(i);
  }
  return m.subset(keep);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Per-source mixing weights, non-negative and summing to one.
class SamplingWeights {
 public:
  static constexpr double kTolerance = 1e-12;

  explicit SamplingWeights(std::vector<double> w) : w_(std::move(w)) {
    if (w_.empty()) throw ArgumentError("sampling weights: no sources");
    double sum = 0.0;
    for (double v : w_) {
      if (!std::isfinite(v) || v < 0.0) throw ArgumentError("sampling weights must be finite and >= 0");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kTolerance) throw ArgumentError("sampling weights must sum to 1");
  }

  /// Non-negative shares such as "90,10" or {70, 30}, normalized by their sum.
  static SamplingWeights from_shares(const std::vector<double> &shares) {
    double sum = 0.0;
    for (double v : shares) {
      if (!std::isfinite(v) || v < 0.0) throw ArgumentError("sampling shares must be finite and >= 0");
      sum += v;
    }
    if (!(sum > 0.0)) throw ArgumentError("sampling shares sum to zero");
    std::vector<double> w;
    for (double v : shares) w.push_back(v / sum);
    // Put any rounding residue on the largest share.
    const double residue = 1.0 - std::accumulate(w.begin(), w.end(), 0.0);
    *std::max_element(w.begin(), w.end()) += residue;
    return SamplingWeights(std::move(w));
  }

  static SamplingWeights parse(std::string_view text) {
    std::vector<double> shares;
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
      try {
        size_t used = 0;
        shares.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception &) {
        throw ConfigError("bad sampling weights '" + std::string(text) + "'");
      }
    }
    try {
      return from_shares(shares);
    } catch (const ArgumentError &e) {
      throw ConfigError(e.what());
    }
  }

  size_t size() const { return w_.size(); }
  double operator[](size_t i) const { return w_[i]; }
  const std::vector<double> &values() const { return w_; }

 private:
  std::vector<double> w_;
};

/// Infinite stream of (source, utterance) draws. Draw k depends only on
/// (seed, k), so a stream can be resumed from any position.
class WeightedSampler {
 public:
  struct Draw {
    size_t source;
    size_t index;
  };

  WeightedSampler(std::vector<const Manifest *> sources, SamplingWeights weights, uint64_t seed)
      : sources_(std::move(sources)), weights_(std::move(weights)), seed_(seed) {
    if (sources_.size() != weights_.size()) {
      throw ArgumentError("sampler: source and weight counts differ");
    }
    double acc = 0.0;
    for (size_t s = 0; s < sources_.size(); ++s) {
      if (weights_[s] > 0.0 && (sources_[s] == nullptr || sources_[s]->empty())) {
        throw ArgumentError("sampler: non-zero weight on empty source " + std::to_string(s));
      }
      acc += weights_[s];
      cumulative_.push_back(acc);
      if (weights_[s] > 0.0) last_live_ = s;
    }
  }

  Draw draw_at(uint64_t k) const {
    const double r = unit_interval(mix_seed(seed_, 2 * k));
    size_t s = last_live_;
    for (size_t i = 0; i < cumulative_.size(); ++i) {
      if (r < cumulative_[i]) {
        s = i;
        break;
      }
    }
    const uint64_t bits = mix_seed(seed_, 2 * k + 1);
    const auto n = static_cast<unsigned __int128>(sources_[s]->size());
    return {s, static_cast<size_t>((static_cast<unsigned __int128>(bits) * n) >> 64)};
  }

  Draw next() { return draw_at(position_++); }
  const Utterance &utterance(const Draw &d) const { return (*sources_[d.source])[d.index]; }
  const Manifest &source(size_t s) const { return *sources_[s]; }

  uint64_t position() const { return position_; }
  void seek(uint64_t position) { position_ = position; }

 private:
  std::vector<const Manifest *> sources_;
  SamplingWeights weights_;
  uint64_t seed_;
  std::vector<double> cumulative_;
  size_t last_live_ = 0;
  uint64_t position_ = 0;
};

}  // namespace rnnt_oov

#endif  // RNNT_OOV_DATASET_HPP
