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

#ifndef RNNT_OOV_EVALUATION_HPP
#define RNNT_OOV_EVALUATION_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnt_oov/dataset.hpp"
#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/rnnt_model.hpp"
#include "rnnt_oov/tokenizer.hpp"
#include "rnnt_oov/tts_proxy.hpp"

namespace rnnt_oov {

enum class EditOp : char { match = 'M', substitution = 'S', deletion = 'D', insertion = 'I' };

struct AlignedPair {
  EditOp op;
  int ref;  // index into ref words, -1 for insertions
  int hyp;  // index into hyp words, -1 for deletions
};

struct EditResult {
  size_t substitutions = 0, deletions = 0, insertions = 0;
  std::vector<AlignedPair> alignment;

  size_t errors() const { return substitutions + deletions + insertions; }
};

/// Levenshtein alignment. On equal cost the backtrace prefers
/// match, then substitution, then deletion, then insertion.
inline EditResult edit_distance(const std::vector<std::string> &ref, const std::vector<std::string> &hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> size_t & { return d[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditResult r;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const size_t here = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && here == at(i - 1, j - 1)) {
      r.alignment.push_back({EditOp::match, int(i - 1), int(j - 1)});
      --i, --j;
    } else if (i > 0 && j > 0 && here == at(i - 1, j - 1) + 1) {
      r.alignment.push_back({EditOp::substitution, int(i - 1), int(j - 1)});
      ++r.substitutions;
      --i, --j;
    } else if (i > 0 && here == at(i - 1, j) + 1) {
      r.alignment.push_back({EditOp::deletion, int(i - 1), -1});
      ++r.deletions;
      --i;
    } else {
      r.alignment.push_back({EditOp::insertion, -1, int(j - 1)});
      ++r.insertions;
      --j;
    }
  }
  std::reverse(r.alignment.begin(), r.alignment.end());
  return r;
}

struct UtteranceResult {
  std::string id;
  std::vector<std::string> ref, hyp;
  EditResult edits;
};

struct WerReport {
  std::vector<UtteranceResult> utterances;
  size_t S = 0, D = 0, I = 0, N = 0;
  std::optional<double> normalizer;

  double wer() const { return N == 0 ? 0.0 : static_cast<double>(S + D + I) / static_cast<double>(N); }

  std::optional<double> nwer() const {
    if (!normalizer || !(*normalizer > 0.0)) return std::nullopt;
    return wer() / *normalizer;
  }

  void add(UtteranceResult u) {
    S += u.edits.substitutions;
    D += u.edits.deletions;
    I += u.edits.insertions;
    N += u.ref.size();
    utterances.push_back(std::move(u));
  }

  nlohmann::json summary_json() const {
    nlohmann::json j = {{"S", S}, {"D", D}, {"I", I}, {"N", N}, {"wer", wer()}};
    j["normalizer"] = normalizer ? nlohmann::json(*normalizer) : nlohmann::json(nullptr);
    j["nwer"] = nwer() ? nlohmann::json(*nwer()) : nlohmann::json(nullptr);
    return j;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = summary_json();
    j["utterances"] = nlohmann::json::array();
    for (const auto &u : utterances) {
      std::string ops;
      for (const auto &a : u.edits.alignment) ops.push_back(static_cast<char>(a.op));
      j["utterances"].push_back({{"id", u.id},
                                 {"ref", join_words(u.ref)},
                                 {"hyp", join_words(u.hyp)},
                                 {"alignment", ops}});
    }
    return j;
  }

  static std::string join_words(const std::vector<std::string> &w) {
    std::string s;
    for (size_t i = 0; i < w.size(); ++i) s += (i ? " " : "") + w[i];
    return s;
  }

  /// Rebuilds a report (alignments included) from to_json output.
  static WerReport from_json(const nlohmann::json &j) {
    WerReport r;
    try {
      for (const auto &u : j.at("utterances")) {
        UtteranceResult ur{u.at("id").get<std::string>(), split_words(u.at("ref").get<std::string>()),
                           split_words(u.at("hyp").get<std::string>()), {}};
        ur.edits = edit_distance(ur.ref, ur.hyp);
        r.add(std::move(ur));
      }
      if (!j.at("normalizer").is_null()) r.normalizer = j.at("normalizer").get<double>();
    } catch (const nlohmann::json::exception &e) {
      throw FormatError(std::string("report: ") + e.what());
    }
    return r;
  }
};

inline UtteranceResult score_utterance(const std::string &id, const std::string &ref_text,
                                       const std::string &hyp_text) {
  UtteranceResult u{id, split_words(ref_text), split_words(hyp_text), {}};
  u.edits = edit_distance(u.ref, u.hyp);
  return u;
}

/// Greedy-decodes every utterance and scores it against its transcript.
inline WerReport evaluate(const RnntModel &model, const Vocab &vocab, const Manifest &m,
                          std::optional<double> normalizer = std::nullopt) {
  WerReport r;
  r.normalizer = normalizer;
  for (const auto &u : m) {
    const NumArray feats = load_features(m, u);
    r.add(score_utterance(u.id, u.text, decode(greedy_decode(model, feats), vocab)));
  }
  return r;
}

/// Sum of two reports over disjoint utterance sets.
inline WerReport merge_reports(const WerReport &a, const WerReport &b) {
  WerReport r;
  r.normalizer = a.normalizer;
  for (const auto &u : a.utterances) r.add(u);
  for (const auto &u : b.utterances) r.add(u);
  return r;
}

inline std::string format_rate(std::optional<double> v) {
  if (!v) return "NA";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

inline std::string summary_header() { return "set\tS\tD\tI\tN\tWER\tNWER\n"; }

inline std::string summary_line(const std::string &name, const WerReport &r) {
  std::ostringstream s;
  s << name << '\t' << r.S << '\t' << r.D << '\t' << r.I << '\t' << r.N << '\t' << format_rate(r.wer()) << '\t'
    << format_rate(r.nwer()) << '\n';
  return s.str();
}

// ---------------------------------------------------------------------------
// Per-word analysis
// ---------------------------------------------------------------------------

struct WordErrors {
  size_t occurrences = 0;
  size_t missed = 0;  // reference occurrences not aligned as a match

  double rate() const { return occurrences ? static_cast<double>(missed) / static_cast<double>(occurrences) : 0.0; }
};

inline std::map<std::string, WordErrors> word_errors(const WerReport &r, const OovList &words) {
  std::map<std::string, WordErrors> out;
  for (const auto &u : r.utterances) {
    for (const auto &a : u.edits.alignment) {
      if (a.ref < 0) continue;
      const std::string &w = u.ref[static_cast<size_t>(a.ref)];
      if (!words.contains(w)) continue;
      auto &e = out[w];
      ++e.occurrences;
      if (a.op != EditOp::match) ++e.missed;
    }
  }
  return out;
}

struct WordReduction {
  std::string word;
  size_t count;  // occurrences in the fine-tuning text
  double base_error, new_error, reduction;
};

struct ReductionBucket {
  size_t count;
  size_t words;
  double mean_reduction;
};

struct WordAnalysis {
  std::vector<WordReduction> words;
  std::vector<ReductionBucket> buckets;  // ascending count
};

/// Relative per-word error reduction 1 - e_new/e_base, averaged over OOV words
/// with equal occurrence counts in finetune_texts. Words the base system never
/// missed are left out.
inline WordAnalysis per_word_analysis(const WerReport &base, const WerReport &next, const OovList &oov,
                                      const std::vector<std::string> &finetune_texts) {
  if (base.utterances.size() != next.utterances.size()) throw ArgumentError("per_word_analysis: report sizes differ");
  for (size_t i = 0; i < base.utterances.size(); ++i) {
    if (base.utterances[i].id != next.utterances[i].id || base.utterances[i].ref != next.utterances[i].ref) {
      throw ArgumentError("per_word_analysis: reports cover different utterances");
    }
  }
  const auto counts = word_counts(finetune_texts);
  const auto eb = word_errors(base, oov), en = word_errors(next, oov);
  WordAnalysis out;
  std::map<size_t, std::pair<size_t, double>> acc;
  for (const auto &[w, b] : eb) {
    if (b.missed == 0) continue;
    const auto it = counts.find(w);
    const size_t c = it == counts.end() ? 0 : it->second;
    const double e_new = en.at(w).rate();
    const double red = 1.0 - e_new / b.rate();
    out.words.push_back({w, c, b.rate(), e_new, red});
    acc[c].first += 1;
    acc[c].second += red;
  }
  for (const auto &[c, a] : acc) out.buckets.push_back({c, a.first, a.second / static_cast<double>(a.first)});
  return out;
}

inline std::string word_analysis_tsv(const WordAnalysis &a) {
  std::ostringstream s;
  s << std::setprecision(6) << "count\twords\tmean_relative_reduction\n";
  for (const auto &b : a.buckets) s << b.count << '\t' << b.words << '\t' << b.mean_reduction << '\n';
  return s.str();
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_EVALUATION_HPP
