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

// Elastic weight consolidation and component freezing.
//
//   L_EWC = lambda/2 * sum_i F_i (theta_i - theta_old_i)^2
//
// F is the empirical Fisher diagonal: the mean squared gradient of
// log p(y|x) at the reference transcripts.

#ifndef RNNT_OOV_REGULARIZATION_HPP
#define RNNT_OOV_REGULARIZATION_HPP

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "rnnt_oov/dataset.hpp"
#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/rnnt_model.hpp"
#include "rnnt_oov/tts_proxy.hpp"

namespace rnnt_oov {

/// FNV-1a over parameter names and value bytes.
inline uint64_t param_digest(const ParamTree &p) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void *data, size_t n) {
    const auto *b = static_cast<const unsigned char *>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto &[name, param] : p) {
    feed(name.data(), name.size());
    feed(param.value.values().data(), param.value.size() * sizeof(double));
  }
  return h;
}

/// Copy of parameter values and tags, with zero gradients.
inline ParamTree snapshot_values(const ParamTree &p) {
  ParamTree out;
  for (const auto &[name, param] : p) out.add(name, param.value, param.component);
  return out;
}

struct EwcState {
  ParamTree theta_old;
  ParamTree fisher;
  double lambda = 0.0;
  ComponentSet scope = ComponentSet::all();

  EwcState() = default;
  EwcState(ParamTree theta, ParamTree f, double lam, ComponentSet sc)
      : theta_old(std::move(theta)), fisher(std::move(f)), lambda(lam), scope(sc) {
    validate();
    digest_ = param_digest(theta_old);
  }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("ewc: lambda must be finite and >= 0");
    if (!theta_old.same_layout(fisher)) throw DimensionError("ewc: fisher and snapshot layouts differ");
    for (const auto &[name, p] : fisher) {
      for (double v : p.value.values()) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("ewc: fisher entries must be finite and >= 0");
      }
    }
  }

  void check_aligned(const ParamTree &live) const {
    if (!theta_old.same_layout(live)) throw DimensionError("ewc: state does not match model parameters");
  }

  /// Throws if the snapshot changed since construction.
  void verify_snapshot() const {
    if (param_digest(theta_old) != digest_) throw NumericError("ewc: theta_old was modified");
  }

  /// Plain L2 anchor: every F_i = 1.
  static EwcState l2(const ParamTree &theta, double lambda, ComponentSet scope) {
    ParamTree ones = snapshot_values(theta);
    for (auto &[name, p] : ones) p.value.fill(1.0);
    return EwcState(snapshot_values(theta), std::move(ones), lambda, scope);
  }

 private:
  uint64_t digest_ = 0;
};

/// Mean of squared per-utterance gradients over n_samples seeded draws
/// (with replacement). Leaves model gradients at zero.
inline ParamTree estimate_fisher(RnntModel &model, const Manifest &data, const Vocab &vocab,
                                 size_t n_samples, uint64_t seed) {
  if (data.empty()) throw ArgumentError("estimate_fisher: empty manifest");
  if (n_samples < 1) throw ArgumentError("estimate_fisher: n_samples must be >= 1");
  ParamTree fisher = snapshot_values(model.params());
  for (auto &[name, p] : fisher) p.value.fill(0.0);
  Rng rng(seed);
  for (size_t n = 0; n < n_samples; ++n) {
    const Utterance &u = data[rng.index(data.size())];
    const Example ex = load_example(data, u, vocab);
    model.params().zero_grad();
    rnnt_loss(model, ex.features, ex.targets);
    for (auto &[name, p] : fisher) {
      const auto &g = model.params().grad(name).values();
      auto &f = p.value.values();
      for (size_t i = 0; i < f.size(); ++i) f[i] += g[i] * g[i];
    }
  }
  model.params().zero_grad();
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (auto &[name, p] : fisher) {
    for (double &v : p.value.values()) v *= inv;
  }
  return fisher;
}

/// Penalty over in-scope parameters; adds lambda * F * delta to their gradients
/// when add_grad is set.
inline double ewc_penalty(const EwcState &state, ParamTree &live, bool add_grad = true) {
  state.check_aligned(live);
  double sum = 0.0;
  for (auto &[name, p] : live) {
    if (!state.scope.contains(p.component)) continue;
    const auto &theta = p.value.values();
    const auto &old = state.theta_old.value(name).values();
    const auto &f = state.fisher.value(name).values();
    auto &g = p.grad.values();
    for (size_t i = 0; i < theta.size(); ++i) {
      const double d = theta[i] - old[i];
      sum += f[i] * d * d;
      if (add_grad) g[i] += state.lambda * f[i] * d;
    }
  }
  return 0.5 * state.lambda * sum;
}

struct FreezeMask {
  ComponentSet frozen;

  bool is_frozen(Component c) const { return frozen.contains(c); }
};

/// Zeroes the gradients of frozen components.
inline void apply_freeze(ParamTree &params, const FreezeMask &mask) {
  for (auto &[name, p] : params) {
    if (mask.is_frozen(p.component)) p.grad.fill(0.0);
  }
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_REGULARIZATION_HPP
