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

// End-to-end recipe: toy corpus generation, subset construction, baseline
// training, the fine-tuning grid and the summary report.

#ifndef RNNT_OOV_PIPELINE_HPP
#define RNNT_OOV_PIPELINE_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnt_oov/checkpoint.hpp"
#include "rnnt_oov/dataset.hpp"
#include "rnnt_oov/evaluation.hpp"
#include "rnnt_oov/regularization.hpp"
#include "rnnt_oov/rnnt_model.hpp"
#include "rnnt_oov/tokenizer.hpp"
#include "rnnt_oov/trainer.hpp"
#include "rnnt_oov/tts_proxy.hpp"

namespace rnnt_oov {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Toy corpus
// ---------------------------------------------------------------------------

inline const std::vector<std::string> &default_known_words() {
  static const std::vector<std::string> w = {
      "play",  "stop",   "turn",  "on",    "off",    "the",   "music", "song",  "light", "set",
      "alarm", "timer",  "for",   "me",    "what",   "is",    "time",  "today", "call",  "mom",
      "dad",   "news",   "show",  "read",  "next",   "up",    "down",  "open",  "door",  "room",
      "how",   "much",   "rain",  "radio", "list",   "add",   "to",    "my",    "some",  "jazz",
      "game",  "score",  "book",  "cold",  "quiz",   "live",    "west",  "fix",   "go",    "weather"};
  return w;
}

inline const std::vector<std::string> &default_oov_words() {
  static const std::vector<std::string> w = {
      "covid", "virus",  "vaccine", "mask",   "zoom",    "tiktok", "podcast", "booster", "lockdown", "wordle",
      "crypto", "emoji", "selfie",  "vlog",   "omicron", "webinar", "bitcoin", "pandemic", "quarantine", "delta"};
  return w;
}

struct CorpusConfig {
  uint64_t seed = 1;
  size_t known_words = 50;
  size_t oov_words = 20;
  size_t train_utterances = 2000;
  size_t dev_utterances = 500;
  size_t eval_utterances = 500;
  size_t min_words = 3;
  size_t max_words = 6;
  size_t dev_oov_min = 3;   // dev occurrences of the rarest OOV word
  size_t dev_oov_max = 12;  // and of the most frequent one
  size_t eval_oov_count = 6;
  size_t dev_sub = 250;
  size_t eval_sub = 400;
  RenderOptions render;
  VoiceConfig voices;

  void validate() const {
    if (known_words < 1 || known_words > default_known_words().size()) {
      throw ConfigError("known_words must be in [1, " + std::to_string(default_known_words().size()) + "]");
    }
    if (oov_words > default_oov_words().size()) {
      throw ConfigError("oov_words must be <= " + std::to_string(default_oov_words().size()));
    }
    if (min_words < 1 || max_words < min_words) throw ConfigError("need 1 <= min_words <= max_words");
    if (train_utterances < 1 || dev_utterances < 1 || eval_utterances < 1) {
      throw ConfigError("corpus sizes must be >= 1");
    }
    if (dev_oov_min < 3 || dev_oov_max < dev_oov_min) throw ConfigError("need 3 <= dev_oov_min <= dev_oov_max");
    if (dev_occurrences_total() > dev_utterances) throw ConfigError("dev set too small for the OOV occurrences");
    if (oov_words * eval_oov_count > eval_utterances) throw ConfigError("eval set too small for the OOV occurrences");
    if (dev_sub > dev_utterances || eval_sub > eval_utterances) throw ConfigError("subset size exceeds its corpus");
    if (voices.real_speakers < 1) throw ConfigError("need at least one real speaker");
  }

  /// Dev occurrences of OOV word k, spread evenly over [dev_oov_min, dev_oov_max].
  size_t dev_occurrences(size_t k) const {
    if (oov_words <= 1) return dev_oov_max;
    return dev_oov_min + (k * (dev_oov_max - dev_oov_min) + (oov_words - 1) / 2) / (oov_words - 1);
  }

  size_t dev_occurrences_total() const {
    size_t n = 0;
    for (size_t k = 0; k < oov_words; ++k) n += dev_occurrences(k);
    return n;
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"known_words", known_words},
            {"oov_words", oov_words},
            {"train_utterances", train_utterances},
            {"dev_utterances", dev_utterances},
            {"eval_utterances", eval_utterances},
            {"min_words", min_words},
            {"max_words", max_words},
            {"dev_oov_min", dev_oov_min},
            {"dev_oov_max", dev_oov_max},
            {"eval_oov_count", eval_oov_count},
            {"dev_sub", dev_sub},
            {"eval_sub", eval_sub},
            {"feature_dim", render.feature_dim},
            {"frames_per_token", render.frames_per_token},
            {"pattern_scale", render.pattern_scale},
            {"pattern_seed", render.pattern_seed},
            {"pattern_groups", render.pattern_groups},
            {"group_spread", render.group_spread},
            {"real_speakers", voices.real_speakers},
            {"real_spread", voices.real_spread},
            {"real_bias_std", voices.real_bias_std},
            {"real_noise_std", voices.real_noise_std},
            {"tts_angle", voices.tts_angle},
            {"tts_bias_std", voices.tts_bias_std},
            {"tts_noise_std", voices.tts_noise_std}};
  }

  static CorpusConfig from_json(const nlohmann::json &j) {
    CorpusConfig c;
    try {
      c.seed = j.at("seed");
      c.known_words = j.at("known_words");
      c.oov_words = j.at("oov_words");
      c.train_utterances = j.at("train_utterances");
      c.dev_utterances = j.at("dev_utterances");
      c.eval_utterances = j.at("eval_utterances");
      c.min_words = j.at("min_words");
      c.max_words = j.at("max_words");
      c.dev_oov_min = j.at("dev_oov_min");
      c.dev_oov_max = j.at("dev_oov_max");
      c.eval_oov_count = j.at("eval_oov_count");
      c.dev_sub = j.at("dev_sub");
      c.eval_sub = j.at("eval_sub");
      c.render.feature_dim = j.at("feature_dim");
      c.render.frames_per_token = j.at("frames_per_token");
      c.render.pattern_scale = j.at("pattern_scale");
      c.render.pattern_seed = j.at("pattern_seed");
      c.render.pattern_groups = j.at("pattern_groups");
      c.render.group_spread = j.at("group_spread");
      c.voices.real_speakers = j.at("real_speakers");
      c.voices.real_spread = j.at("real_spread");
      c.voices.real_bias_std = j.at("real_bias_std");
      c.voices.real_noise_std = j.at("real_noise_std");
      c.voices.tts_angle = j.at("tts_angle");
      c.voices.tts_bias_std = j.at("tts_bias_std");
      c.voices.tts_noise_std = j.at("tts_noise_std");
    } catch (const nlohmann::json::exception &e) {
      throw FormatError(std::string("corpus config: ") + e.what());
    }
    c.validate();
    return c;
  }
};

struct CorpusTexts {
  std::vector<std::string> train, dev, eval;
  std::vector<std::string> oov;  // held-out words
};

inline CorpusTexts generate_texts(const CorpusConfig &c) {
  c.validate();
  const std::vector<std::string> known(default_known_words().begin(),
                                       default_known_words().begin() + static_cast<long>(c.known_words));
  CorpusTexts out;
  out.oov.assign(default_oov_words().begin(), default_oov_words().begin() + static_cast<long>(c.oov_words));

  auto sentences = [&](size_t n, Rng &rng) {
    std::vector<std::vector<std::string>> s(n);
    for (auto &words : s) {
      const size_t len = c.min_words + rng.index(c.max_words - c.min_words + 1);
      for (size_t i = 0; i < len; ++i) words.push_back(known[rng.index(known.size())]);
    }
    return s;
  };
  auto join = [](const std::vector<std::vector<std::string>> &s) {
    std::vector<std::string> t;
    for (const auto &words : s) t.push_back(WerReport::join_words(words));
    return t;
  };
  // Places each listed OOV occurrence into its own randomly chosen sentence.
  auto plant = [&](std::vector<std::vector<std::string>> &s, std::vector<std::string> occ, Rng &rng) {
    for (size_t i = occ.size(); i > 1; --i) std::swap(occ[i - 1], occ[rng.index(i)]);
    std::vector<size_t> slots(s.size());
    for (size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    for (size_t i = 0; i < occ.size(); ++i) {
      std::swap(slots[i], slots[i + rng.index(slots.size() - i)]);
      auto &words = s[slots[i]];
      words[rng.index(words.size())] = occ[i];
    }
  };

  Rng train_rng(mix_seed(c.seed, 1)), dev_rng(mix_seed(c.seed, 2)), eval_rng(mix_seed(c.seed, 3));
  out.train = join(sentences(c.train_utterances, train_rng));

  auto dev = sentences(c.dev_utterances, dev_rng);
  std::vector<std::string> dev_occ;
  for (size_t k = 0; k < out.oov.size(); ++k) dev_occ.insert(dev_occ.end(), c.dev_occurrences(k), out.oov[k]);
  plant(dev, dev_occ, dev_rng);
  out.dev = join(dev);

  auto eval = sentences(c.eval_utterances, eval_rng);
  std::vector<std::string> eval_occ;
  for (const auto &w : out.oov) eval_occ.insert(eval_occ.end(), c.eval_oov_count, w);
  plant(eval, eval_occ, eval_rng);
  out.eval = join(eval);
  return out;
}

/// Layout of a generated data directory.
struct DataDir {
  fs::path root;
  fs::path config() const { return root / "corpus.json"; }
  fs::path vocab() const { return root / "vocab.json"; }
  fs::path train() const { return root / "train.tsv"; }
  fs::path dev() const { return root / "dev.tsv"; }
  fs::path eval() const { return root / "eval.tsv"; }
  fs::path heldout() const { return root / "heldout_oov.txt"; }
  fs::path synth() const { return root / "synth_devoov.tsv"; }
};

inline void write_text_file(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline nlohmann::json read_json_file(const fs::path &path) {
  try {
    return nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Renders a manifest's texts again with the synthetic voice.
inline Manifest synthesize(const Manifest &src, const Vocab &vocab, const CorpusConfig &c, const fs::path &out_dir,
                           const std::string &prefix) {
  return make_corpus(src.texts(), {tts_speaker(c.voices, c.render.feature_dim, c.seed)}, vocab,
                     mix_seed(c.seed, 14), out_dir, prefix, c.render);
}

/// Writes texts, features, manifests and the vocabulary under out_dir.
inline DataDir generate_data(const CorpusConfig &c, const fs::path &out_dir) {
  c.validate();
  DataDir d{out_dir};
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const CorpusTexts texts = generate_texts(c);
  const Vocab vocab = build_vocab(texts.train, VocabMode::character);
  for (const auto &t : texts.dev) encode(t, vocab);
  for (const auto &t : texts.eval) encode(t, vocab);

  const auto pool = real_speaker_pool(c.voices, c.render.feature_dim, c.seed);
  const Manifest train = make_corpus(texts.train, pool, vocab, mix_seed(c.seed, 11), out_dir, "train", c.render);
  const Manifest dev = make_corpus(texts.dev, pool, vocab, mix_seed(c.seed, 12), out_dir, "dev", c.render);
  const Manifest eval = make_corpus(texts.eval, pool, vocab, mix_seed(c.seed, 13), out_dir, "eval", c.render);
  train.save(d.train());
  dev.save(d.dev());
  eval.save(d.eval());
  vocab.save(d.vocab());
  write_text_file(d.config(), c.to_json().dump(1) + "\n");

  OovList held;
  held.words.insert(texts.oov.begin(), texts.oov.end());
  held.save(d.heldout());
  synthesize(select_oov_utterances(dev, held), vocab, c, out_dir, "synth").save(d.synth());
  return d;
}

// ---------------------------------------------------------------------------
// Subsets
// ---------------------------------------------------------------------------

struct Subsets {
  OovList oov;
  Manifest dev_oov, dev_sub, eval_oov, eval_sub, eval_sub_non_oov;
};

inline Subsets make_subsets(const Manifest &train, const Manifest &dev, const Manifest &eval, size_t dev_sub,
                            size_t eval_sub, uint64_t seed, size_t min_count = 3) {
  Subsets s;
  s.oov = extract_oov(train.texts(), dev.texts(), min_count);
  s.dev_oov = select_oov_utterances(dev, s.oov);
  s.dev_sub = downsample(dev, dev_sub, mix_seed(seed, 21));
  s.eval_oov = select_oov_utterances(eval, s.oov);
  s.eval_sub = downsample(eval, eval_sub, mix_seed(seed, 22));
  s.eval_sub_non_oov = complement(s.eval_sub, select_oov_utterances(s.eval_sub, s.oov));
  return s;
}

inline const std::vector<std::pair<std::string, Manifest Subsets::*>> &subset_files() {
  static const std::vector<std::pair<std::string, Manifest Subsets::*>> f = {
      {"dev_oov", &Subsets::dev_oov},
      {"dev_sub", &Subsets::dev_sub},
      {"eval_oov", &Subsets::eval_oov},
      {"eval_sub", &Subsets::eval_sub},
      {"eval_sub_non_oov", &Subsets::eval_sub_non_oov}};
  return f;
}

inline void save_subsets(const Subsets &s, const fs::path &dir) {
  fs::create_directories(dir);
  s.oov.save(dir / "oov.txt");
  for (const auto &[name, member] : subset_files()) {
    Manifest m = s.*member;
    // Keep feature paths valid relative to the new manifest location.
    Manifest out(dir);
    for (const auto &u : m) out.add({u.id, u.text, fs::relative(fs::absolute(m.features_file(u)), fs::absolute(dir))});
    out.save(dir / (name + ".tsv"));
  }
}

// ---------------------------------------------------------------------------
// Experiment grid
// ---------------------------------------------------------------------------

enum class SynthSource { tts, real };

struct GridEntry {
  std::string name;
  std::vector<double> weights;  // (real, synthetic) shares
  SynthSource synth = SynthSource::tts;
  FreezeMask freeze;
  EwcConfig ewc;

  nlohmann::json to_json() const {
    return {{"name", name},
            {"weights", weights},
            {"synth", synth == SynthSource::tts ? "tts" : "real"},
            {"freeze", freeze.frozen.to_string()},
            {"ewc_scope", ewc.enabled ? ewc.scope.to_string() : std::string("none")},
            {"ewc_lambda", ewc.lambda},
            {"ewc_l2", ewc.l2}};
  }

  static GridEntry from_json(const nlohmann::json &j) {
    GridEntry g;
    try {
      g.name = j.at("name").get<std::string>();
      g.weights = j.at("weights").get<std::vector<double>>();
      const std::string synth = j.value("synth", std::string("tts"));
      if (synth != "tts" && synth != "real") throw ConfigError("grid: synth must be tts or real");
      g.synth = synth == "tts" ? SynthSource::tts : SynthSource::real;
      g.freeze.frozen = ComponentSet::parse(j.value("freeze", std::string("none")));
      const ComponentSet scope = ComponentSet::parse(j.value("ewc_scope", std::string("none")));
      g.ewc.enabled = !scope.empty();
      g.ewc.scope = scope;
      g.ewc.lambda = j.value("ewc_lambda", 0.0);
      g.ewc.l2 = j.value("ewc_l2", false);
    } catch (const nlohmann::json::exception &e) {
      throw ConfigError(std::string("grid entry: ") + e.what());
    } catch (const std::invalid_argument &e) {
      throw ConfigError(std::string("grid entry: ") + e.what());
    }
    if (g.weights.size() != 2) throw ConfigError("grid entry " + g.name + ": weights need two shares");
    return g;
  }
};

inline GridEntry grid_entry(std::string name, double real, double synth, SynthSource src = SynthSource::tts,
                            ComponentSet freeze = {}, ComponentSet ewc_scope = {}, double lambda = 0.0) {
  GridEntry g{std::move(name), {real, synth}, src, {freeze}, {}};
  g.ewc.enabled = !ewc_scope.empty();
  g.ewc.scope = ewc_scope;
  g.ewc.lambda = lambda;
  return g;
}

/// Rows of the three ablation tables.
inline std::vector<GridEntry> default_grid(double lambda = 100.0) {
  const ComponentSet enc{Component::encoder};
  const ComponentSet dec_joint{Component::decoder, Component::joint};
  return {grid_entry("mix_0_100", 0, 100),
          grid_entry("mix_70_30", 70, 30),
          grid_entry("mix_90_10", 90, 10),
          grid_entry("mix_90_10_real", 90, 10, SynthSource::real),
          grid_entry("mix_90_10_ef", 90, 10, SynthSource::tts, enc),
          grid_entry("mix_90_10_ewc_enc", 90, 10, SynthSource::tts, {}, enc, lambda),
          grid_entry("mix_0_100_ef", 0, 100, SynthSource::tts, enc),
          grid_entry("mix_0_100_ef_ewc_dj", 0, 100, SynthSource::tts, enc, dec_joint, lambda)};
}

/// 600 steps with the learning rate decayed linearly to zero.
inline TrainConfig default_finetune_config() {
  TrainConfig c;
  c.steps = 600;
  c.lr_decay = true;
  return c;
}

struct GridConfig {
  std::vector<GridEntry> entries;
  TrainConfig finetune = default_finetune_config();  // weights/freeze/ewc come from each entry
  size_t fisher_samples = 200;
};

struct ConfigResult {
  std::string name;
  WerReport dev_oov;  // real recordings of the fine-tuning text
  WerReport oov;      // EvalOOV
  WerReport non_oov;  // EvalSub minus EvalOOV
  WerReport dev_sub;
};

struct GridResult {
  double normalizer = 0.0;  // baseline WER on DevSub
  std::vector<ConfigResult> rows;  // baseline first
  std::string best;
  WordAnalysis words;
};

inline ConfigResult evaluate_config(const std::string &name, const Checkpoint &ck, const Subsets &s,
                                    std::optional<double> normalizer) {
  const RnntModel model = ck.model();
  return {name, evaluate(model, ck.vocab, s.dev_oov, normalizer), evaluate(model, ck.vocab, s.eval_oov, normalizer),
          evaluate(model, ck.vocab, s.eval_sub_non_oov, normalizer), evaluate(model, ck.vocab, s.dev_sub, normalizer)};
}

/// Lowest OOV WER among rows whose non-OOV WER stays within `tolerance`
/// relative of the baseline; the overall lowest if none does.
inline std::string pick_best(const GridResult &g, double tolerance = 0.05) {
  const double base_non = g.rows.front().non_oov.wer();
  std::string best, best_any;
  double w = 2.0, w_any = 2.0;
  for (size_t i = 1; i < g.rows.size(); ++i) {
    const auto &r = g.rows[i];
    if (r.oov.wer() < w_any) w_any = r.oov.wer(), best_any = r.name;
    if (r.non_oov.wer() <= base_non * (1.0 + tolerance) && r.oov.wer() < w) w = r.oov.wer(), best = r.name;
  }
  return best.empty() ? best_any : best;
}

inline std::string report_table(const GridResult &g) {
  std::ostringstream s;
  s << "# normalizer (baseline WER on dev_sub): " << format_rate(g.normalizer) << '\n';
  s << "config\tset\tS\tD\tI\tN\tWER\tNWER\n";
  for (const auto &r : g.rows) {
    s << r.name << '\t' << summary_line("dev_oov", r.dev_oov);
    s << r.name << '\t' << summary_line("eval_oov", r.oov);
    s << r.name << '\t' << summary_line("eval_sub_non_oov", r.non_oov);
    s << r.name << '\t' << summary_line("dev_sub", r.dev_sub);
  }
  return s.str();
}

inline nlohmann::json grid_json(const GridResult &g) {
  nlohmann::json j = {{"normalizer", g.normalizer}, {"best", g.best}};
  j["rows"] = nlohmann::json::array();
  for (const auto &r : g.rows) {
    j["rows"].push_back({{"name", r.name},
                         {"dev_oov", r.dev_oov.summary_json()},
                         {"eval_oov", r.oov.summary_json()},
                         {"eval_sub_non_oov", r.non_oov.summary_json()},
                         {"dev_sub", r.dev_sub.summary_json()}});
  }
  j["per_word"] = nlohmann::json::array();
  for (const auto &w : g.words.words) {
    j["per_word"].push_back({{"word", w.word}, {"count", w.count}, {"base_error", w.base_error},
                             {"new_error", w.new_error}, {"reduction", w.reduction}});
  }
  j["buckets"] = nlohmann::json::array();
  for (const auto &b : g.words.buckets) {
    j["buckets"].push_back({{"count", b.count}, {"words", b.words}, {"mean_reduction", b.mean_reduction}});
  }
  return j;
}

using Progress = std::function<void(const std::string &)>;

/// Fine-tunes every grid entry from `base` and evaluates all systems.
/// Per-entry checkpoints and reports go under out_dir when it is non-empty.
inline GridResult run_grid(const Checkpoint &base, const GridConfig &gc, const Manifest &train, const Manifest &synth_tts,
                           const Subsets &s, const fs::path &out_dir = {}, const Progress &progress = {}) {
  auto say = [&](const std::string &m) {
    if (progress) progress(m);
  };
  GridResult g;
  say("evaluating baseline");
  ConfigResult base_row = evaluate_config("baseline", base, s, std::nullopt);
  g.normalizer = base_row.dev_sub.wer();
  if (!(g.normalizer > 0.0)) throw NumericError("baseline WER on dev_sub is zero; NWER undefined");
  for (WerReport *r : {&base_row.dev_oov, &base_row.oov, &base_row.non_oov, &base_row.dev_sub}) {
    r->normalizer = g.normalizer;
  }
  g.rows.push_back(std::move(base_row));

  std::optional<ParamTree> fisher;
  for (const auto &e : gc.entries) {
    if (e.ewc.enabled && !e.ewc.l2 && !fisher) {
      say("estimating Fisher on the training set");
      RnntModel probe = base.model();
      fisher = estimate_fisher(probe, train, base.vocab, gc.fisher_samples, mix_seed(gc.finetune.seed, 7));
    }
  }
  for (const auto &e : gc.entries) {
    say("fine-tuning " + e.name);
    TrainConfig c = gc.finetune;
    c.weights = e.weights;
    c.freeze = e.freeze;
    c.ewc = e.ewc;
    c.ewc.fisher_samples = gc.fisher_samples;
    const Manifest &synth = e.synth == SynthSource::tts ? synth_tts : s.dev_oov;
    TrainOutput out;
    if (!out_dir.empty()) out.dir = out_dir / e.name;
    TrainResult r = finetune(base, c, {&train, &synth}, nullptr, fisher ? &*fisher : nullptr, out);
    say("evaluating " + e.name);
    g.rows.push_back(evaluate_config(e.name, r.checkpoint, s, g.normalizer));
  }
  g.best = pick_best(g);
  for (const auto &r : g.rows) {
    if (r.name == g.best) g.words = per_word_analysis(g.rows.front().oov, r.oov, s.oov, s.dev_oov.texts());
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir / "report.tsv", report_table(g));
    write_text_file(out_dir / "per_word.tsv", word_analysis_tsv(g.words));
    write_text_file(out_dir / "report.json", grid_json(g).dump(1) + "\n");
  }
  return g;
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_PIPELINE_HPP
