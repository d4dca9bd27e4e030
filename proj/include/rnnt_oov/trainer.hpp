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

#ifndef RNNT_OOV_TRAINER_HPP
#define RNNT_OOV_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rnnt_oov/checkpoint.hpp"
#include "rnnt_oov/dataset.hpp"
#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/regularization.hpp"
#include "rnnt_oov/rnnt_model.hpp"
#include "rnnt_oov/tts_proxy.hpp"

namespace rnnt_oov {

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct EwcConfig {
  bool enabled = false;
  double lambda = 0.0;
  ComponentSet scope = ComponentSet::all();
  size_t fisher_samples = 200;
  bool l2 = false;  // F = 1 everywhere instead of the estimated Fisher
};

struct TrainConfig {
  size_t steps = 3000;
  size_t batch_size = 8;
  double learning_rate = 1e-3;
  bool lr_decay = false;  // linear decay from learning_rate towards 0 over the run
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
  uint64_t seed = 1;
  std::vector<double> weights{1.0};  // one share per source
  FreezeMask freeze;
  EwcConfig ewc;
  size_t checkpoint_every = 0;  // 0: only the final checkpoint

  void validate() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
      throw ConfigError("adam parameters out of range");
    }
    if (!(ewc.lambda >= 0.0) || !std::isfinite(ewc.lambda)) throw ConfigError("ewc lambda must be >= 0");
    if (ewc.enabled && ewc.fisher_samples < 1) throw ConfigError("fisher_samples must be >= 1");
    try {
      SamplingWeights::from_shares(weights);
    } catch (const ArgumentError &e) {
      throw ConfigError(e.what());
    }
  }

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"lr_decay", lr_decay},
            {"optimizer", optimizer == OptimizerKind::adam ? "adam" : "sgd"},
            {"seed", seed},
            {"weights", weights},
            {"freeze", freeze.frozen.to_string()},
            {"ewc", ewc.enabled},
            {"ewc_lambda", ewc.lambda},
            {"ewc_scope", ewc.scope.to_string()},
            {"ewc_l2", ewc.l2}};
  }
};

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

inline void check_finite_grads(const ParamTree &p) {
  for (const auto &[name, param] : p) {
    if (!param.grad.all_finite()) throw NumericError("non-finite gradient in " + name);
  }
}

/// Scales gradients so their global L2 norm is at most max_norm; returns the
/// norm before scaling.
inline double clip_global_norm(ParamTree &p, double max_norm) {
  double sq = 0.0;
  for (const auto &[name, param] : p) {
    for (double g : param.grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto &[name, param] : p) {
      for (double &g : param.grad.values()) g *= s;
    }
  }
  return norm;
}

class Optimizer {
 public:
  explicit Optimizer(const TrainConfig &c) : c_(c) {}

  /// Learning rate for 1-based step k of the configured run.
  double rate_at(uint64_t k) const {
    if (!c_.lr_decay) return c_.learning_rate;
    return c_.learning_rate * (1.0 - static_cast<double>(k - 1) / static_cast<double>(c_.steps));
  }

  /// Updates unfrozen parameters from their gradients, then clears all gradients.
  void step(ParamTree &p, const FreezeMask &mask) { step(p, mask, c_.learning_rate); }
  void step(ParamTree &p, const FreezeMask &mask, double lr) {
    check_finite_grads(p);
    if (c_.optimizer == OptimizerKind::sgd) {
      for (auto &[name, param] : p) {
        if (mask.is_frozen(param.component)) continue;
        kernels::axpy(-lr, param.grad.data(), param.value.data());
      }
    } else {
      ensure_moments(p);
      AdamMoments &a = *adam_;
      ++a.t;
      const double bc1 = 1.0 - std::pow(c_.beta1, static_cast<double>(a.t));
      const double bc2 = 1.0 - std::pow(c_.beta2, static_cast<double>(a.t));
      for (auto &[name, param] : p) {
        if (mask.is_frozen(param.component)) continue;
        auto &m = a.m.value(name).values();
        auto &v = a.v.value(name).values();
        auto &theta = param.value.values();
        const auto &g = param.grad.values();
        for (size_t i = 0; i < theta.size(); ++i) {
          m[i] = c_.beta1 * m[i] + (1.0 - c_.beta1) * g[i];
          v[i] = c_.beta2 * v[i] + (1.0 - c_.beta2) * g[i] * g[i];
          theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c_.epsilon);
        }
      }
    }
    p.zero_grad();
  }

  const std::optional<AdamMoments> &adam_state() const { return adam_; }
  void set_adam_state(std::optional<AdamMoments> s) { adam_ = std::move(s); }

 private:
  void ensure_moments(const ParamTree &p) {
    if (adam_) return;
    AdamMoments a;
    a.m = snapshot_values(p);
    for (auto &[name, param] : a.m) param.value.fill(0.0);
    a.v = snapshot_values(a.m);
    adam_ = std::move(a);
  }

  TrainConfig c_;
  std::optional<AdamMoments> adam_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LogRow {
  uint64_t step;
  double loss;
  double penalty;
  double wall_ms;
};

inline void write_train_log(const std::vector<LogRow> &rows, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training log " + path.string());
  out << "step\tloss\tpenalty\twall_ms\n" << std::setprecision(9);
  for (const auto &r : rows) out << r.step << '\t' << r.loss << '\t' << r.penalty << '\t' << r.wall_ms << '\n';
}

/// Loads each utterance's features once and keeps them.
class ExampleCache {
 public:
  ExampleCache(const Manifest &m, const Vocab &vocab) : m_(&m), vocab_(&vocab), cache_(m.size()) {}
  const Example &get(size_t i) {
    if (!cache_[i]) cache_[i] = load_example(*m_, (*m_)[i], *vocab_);
    return *cache_[i];
  }

 private:
  const Manifest *m_;
  const Vocab *vocab_;
  std::vector<std::optional<Example>> cache_;
};

struct TrainOutput {
  std::filesystem::path dir;  // empty: no files written
  std::function<void(const LogRow &)> on_step;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LogRow> log;
};

namespace detail {

/// Runs steps (start, c.steps] on ck in place. Batches come from draws
/// [start * B, c.steps * B) of the sampler.
inline std::vector<LogRow> run_steps(Checkpoint &ck, const TrainConfig &c,
                                     const std::vector<const Manifest *> &sources, const EwcState *ewc,
                                     const TrainOutput &out) {
  c.validate();
  RnntModel model(ck.config, std::move(ck.params));
  Optimizer opt(c);
  opt.set_adam_state(std::move(ck.adam));
  WeightedSampler sampler(sources, SamplingWeights::from_shares(c.weights), c.seed);
  sampler.seek(ck.step * c.batch_size);
  std::vector<ExampleCache> caches;
  for (const Manifest *m : sources) caches.emplace_back(*m, ck.vocab);
  if (ewc) ewc->check_aligned(model.params());

  std::vector<LogRow> log;
  const double scale = 1.0 / static_cast<double>(c.batch_size);
  for (uint64_t step = ck.step + 1; step <= c.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss = 0.0;
    model.params().zero_grad();
    for (size_t b = 0; b < c.batch_size; ++b) {
      const auto d = sampler.next();
      const Example &ex = caches[d.source].get(d.index);
      loss += scale * rnnt_loss(model, ex.features, ex.targets, scale);
    }
    const double penalty = ewc ? ewc_penalty(*ewc, model.params()) : 0.0;
    if (!std::isfinite(loss) || !std::isfinite(penalty)) {
      throw NumericError("non-finite loss at step " + std::to_string(step));
    }
    apply_freeze(model.params(), c.freeze);
    check_finite_grads(model.params());
    clip_global_norm(model.params(), c.clip_norm);
    opt.step(model.params(), c.freeze, opt.rate_at(step));
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.push_back({step, loss, penalty, ms});
    if (out.on_step) out.on_step(log.back());

    if (!out.dir.empty() && c.checkpoint_every > 0 && step % c.checkpoint_every == 0 && step < c.steps) {
      Checkpoint snap{ck.config, ck.vocab, model.params(), step, ck.info, ck.ewc, opt.adam_state()};
      std::ostringstream name;
      name << "ckpt_" << std::setw(6) << std::setfill('0') << step << ".bin";
      save_checkpoint(snap, out.dir / name.str());
    }
  }
  if (ewc) ewc->verify_snapshot();
  ck.params = std::move(model.params());
  ck.params.zero_grad();
  ck.adam = opt.adam_state();
  ck.step = c.steps;
  return log;
}

inline void write_outputs(const TrainResult &r, const TrainOutput &out) {
  if (out.dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(out.dir, ec);
  if (ec) throw IoError("cannot create " + out.dir.string() + ": " + ec.message());
  write_train_log(r.log, out.dir / "train.log");
  save_checkpoint(r.checkpoint, out.dir / "final.bin");
}

}  // namespace detail

/// Trains from seeded initialization on one manifest.
inline TrainResult train_baseline(const TrainConfig &c, const ModelConfig &mc, const Vocab &vocab,
                                  const Manifest &train, const TrainOutput &out = {}) {
  c.validate();
  if (train.empty()) throw ArgumentError("train_baseline: empty manifest");
  if (!c.freeze.frozen.empty() || c.ewc.enabled) throw ConfigError("baseline training takes no freeze or ewc");
  if (c.weights.size() != 1) throw ConfigError("baseline training uses exactly one source");
  if (mc.vocab_size != vocab.label_count()) throw ConfigError("model vocab_size does not match the vocabulary");
  RnntModel init(mc, c.seed);
  Checkpoint ck{mc, vocab, std::move(init.params()), 0, {{"kind", "baseline"}, {"train", c.to_json()}}, {}, {}};
  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
  TrainResult r;
  r.log = detail::run_steps(ck, c, {&train}, nullptr, out);
  r.checkpoint = std::move(ck);
  detail::write_outputs(r, out);
  return r;
}

/// Continues an interrupted run from a checkpoint written by run_steps.
inline TrainResult resume_training(Checkpoint ck, const TrainConfig &c, const std::vector<const Manifest *> &sources,
                                   const TrainOutput &out = {}) {
  if (ck.step >= c.steps) throw ConfigError("checkpoint is already at or past the configured step count");
  std::optional<EwcState> ewc = ck.ewc;
  TrainResult r;
  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
  r.log = detail::run_steps(ck, c, sources, ewc ? &*ewc : nullptr, out);
  r.checkpoint = std::move(ck);
  detail::write_outputs(r, out);
  return r;
}

/// Fine-tunes `base` on the weighted sources with a fresh optimizer. With ewc
/// enabled, theta_old is the base parameters and the Fisher is estimated on
/// fisher_source (or taken from `fisher` / base.ewc when given).
inline TrainResult finetune(const Checkpoint &base, const TrainConfig &c, const std::vector<const Manifest *> &sources,
                            const Manifest *fisher_source = nullptr, const ParamTree *fisher = nullptr,
                            const TrainOutput &out = {}) {
  c.validate();
  if (sources.size() != c.weights.size()) throw ConfigError("finetune: one weight per source required");
  if (!base.params.same_layout(RnntModel::layout(base.config))) {
    throw DimensionError("finetune: base parameters do not match its config");
  }
  Checkpoint ck{base.config, base.vocab, base.params, 0, base.info, {}, {}};
  ck.info["kind"] = "finetune";
  ck.info["finetune"] = c.to_json();
  ck.params.zero_grad();

  if (c.ewc.enabled) {
    if (c.ewc.l2) {
      ck.ewc = EwcState::l2(base.params, c.ewc.lambda, c.ewc.scope);
    } else {
      ParamTree f;
      if (fisher) {
        f = snapshot_values(*fisher);
      } else if (fisher_source) {
        RnntModel probe(base.config, base.params);
        f = estimate_fisher(probe, *fisher_source, base.vocab, c.ewc.fisher_samples, mix_seed(c.seed, 7));
      } else if (base.ewc) {
        f = snapshot_values(base.ewc->fisher);
      } else {
        throw ConfigError("finetune: ewc enabled but no Fisher source");
      }
      ck.ewc = EwcState(snapshot_values(base.params), std::move(f), c.ewc.lambda, c.ewc.scope);
    }
  }
  if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
  TrainResult r;
  r.log = detail::run_steps(ck, c, sources, ck.ewc ? &*ck.ewc : nullptr, out);
  r.checkpoint = std::move(ck);
  detail::write_outputs(r, out);
  return r;
}

// ---------------------------------------------------------------------------
// Config files: `key = value` lines, '#' starts a comment.
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_TRAINER_HPP
