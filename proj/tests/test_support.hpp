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

// Test-only oracles: finite differences and brute-force enumeration. Nothing
// in here calls into the lattice recurrences or the edit-distance DP.

#ifndef RNNT_OOV_TESTS_TEST_SUPPORT_HPP
#define RNNT_OOV_TESTS_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/rnnt_model.hpp"

namespace rnnt_oov::testing {

inline constexpr double kFdStep = 1e-5;

/// |a - b| / max(|a|, |b|), switching to the absolute difference once both
/// magnitudes fall below `floor`.
inline double relative_error(double analytic, double numeric, double floor = 1e-5) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()> &f, double *x, double h = kFdStep) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

inline NumArray random_array(std::vector<size_t> shape, Rng &rng, double scale = 1.0) {
  NumArray a(std::move(shape));
  for (double &v : a.values()) v = rng.uniform(-scale, scale);
  return a;
}

/// Sum over every monotonic alignment, enumerated path by path.
/// blank(t, u) / label(t, u) return log-probabilities at node (t, u).
inline double brute_force_log_likelihood(size_t T, size_t U,
                                         const std::function<double(size_t, size_t)> &blank,
                                         const std::function<double(size_t, size_t)> &label) {
  std::vector<double> path_scores;
  std::function<void(size_t, size_t, double)> walk = [&](size_t t, size_t u, double score) {
    if (u < U) walk(t, u + 1, score + label(t, u));
    if (t + 1 < T) walk(t + 1, u, score + blank(t, u));
    if (t + 1 == T && u == U) path_scores.push_back(score + blank(t, u));
  };
  walk(0, 0, 0.0);
  const double m = *std::max_element(path_scores.begin(), path_scores.end());
  double s = 0.0;
  for (double v : path_scores) s += std::exp(v - m);
  return m + std::log(s);
}

/// Number of monotonic alignments: C(T - 1 + U, U).
inline size_t alignment_count(size_t T, size_t U) {
  double c = 1.0;
  for (size_t k = 1; k <= U; ++k) c = c * static_cast<double>(T - 1 + k) / static_cast<double>(k);
  return static_cast<size_t>(std::llround(c));
}

/// Model-level oracle: loss from encode_audio / predict / joint with
/// explicit path enumeration.
inline double brute_force_loss(const RnntModel &model, const NumArray &features,
                               const TokenSeq &targets) {
  const NumArray f = encode_audio(model, features);
  const NumArray g = predict(model, targets);
  const size_t T = f.rows(), U = targets.size();
  std::vector<NumArray> lp;
  for (size_t t = 0; t < T; ++t) {
    for (size_t u = 0; u <= U; ++u) lp.push_back(log_softmax(joint(model, f.row(t), g.row(u))));
  }
  auto at = [&](size_t t, size_t u) -> const NumArray & { return lp[t * (U + 1) + u]; };
  return -brute_force_log_likelihood(
      T, U, [&](size_t t, size_t u) { return at(t, u)[0]; },
      [&](size_t t, size_t u) { return at(t, u)[static_cast<size_t>(targets[u])]; });
}

inline ModelConfig tiny_config(size_t vocab_size, size_t width = 4) {
  ModelConfig c;
  c.encoder_layers = 2;
  c.encoder_width = width;
  c.decoder_layers = 1;
  c.decoder_width = width;
  c.joint_width = width;
  c.feature_dim = 3;
  c.vocab_size = vocab_size;
  return c;
}

inline TokenSeq random_targets(size_t U, size_t V, Rng &rng) {
  TokenSeq y;
  for (size_t u = 0; u < U; ++u) y.push_back(1 + static_cast<int>(rng.index(V)));
  return y;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("rnnt_oov_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rnnt_oov::testing

#endif  // RNNT_OOV_TESTS_TEST_SUPPORT_HPP
