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

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "rnnt_oov/rnnt_model.hpp"
#include "test_support.hpp"

namespace rnnt_oov {
namespace {

using testing::brute_force_log_likelihood;
using testing::brute_force_loss;
using testing::central_difference;
using testing::random_array;
using testing::random_targets;
using testing::relative_error;
using testing::tiny_config;

TEST(ModelLayoutTest, EveryParameterHasOneComponentAndOutputIsVPlusOne) {
  const ModelConfig c = tiny_config(5);
  const RnntModel m(c, 1);
  std::set<Component> seen;
  for (const auto &[name, p] : m.params()) {
    seen.insert(p.component);
    const std::string prefix = name.substr(0, name.find('.'));
    EXPECT_EQ(prefix, component_name(p.component)) << name;
  }
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_EQ(m.params().value(names::kJointOutBias).size(), 6u);
}

TEST(ModelLayoutTest, InvalidConfigRejected) {
  ModelConfig c = tiny_config(3);
  c.encoder_layers = 0;
  EXPECT_THROW(RnntModel(c, 1), ConfigError);
  c = tiny_config(0);
  EXPECT_THROW(RnntModel(c, 1), ConfigError);
}

TEST(ModelLayoutTest, InitIsSeededAndWithinFanInBound) {
  const ModelConfig c = tiny_config(3, 16);
  const RnntModel a(c, 42), b(c, 42), other(c, 43);
  EXPECT_EQ(a.params().value("encoder.lstm1.w_x"), b.params().value("encoder.lstm1.w_x"));
  EXPECT_NE(a.params().value("encoder.lstm1.w_x"), other.params().value("encoder.lstm1.w_x"));
  for (double v : a.params().value("encoder.lstm1.w_x").values()) EXPECT_LE(std::abs(v), 0.25);
}

TEST(EncodeAudioTest, OneStatePerFrame) {
  const RnntModel m(tiny_config(2), 3);
  Rng rng(1);
  EXPECT_EQ(encode_audio(m, random_array({1, 3}, rng)).rows(), 1u);
  EXPECT_EQ(encode_audio(m, random_array({7, 3}, rng)).rows(), 7u);
}

TEST(EncodeAudioTest, CausalInTime) {
  const RnntModel m(tiny_config(2), 3);
  Rng rng(2);
  NumArray x = random_array({5, 3}, rng);
  const NumArray before = encode_audio(m, x);
  for (size_t k = 0; k < 3; ++k) x.at(3, k) += 1.0;
  const NumArray after = encode_audio(m, x);
  for (size_t t = 0; t < 3; ++t) {
    for (size_t j = 0; j < before.cols(); ++j) EXPECT_EQ(before.at(t, j), after.at(t, j));
  }
  EXPECT_NE(before.at(3, 0), after.at(3, 0));
}

TEST(EncodeAudioTest, RejectsEmptyAndWrongWidth) {
  const RnntModel m(tiny_config(2), 3);
  EXPECT_THROW(encode_audio(m, NumArray({0, 3})), ArgumentError);
  EXPECT_THROW(encode_audio(m, NumArray({4, 2})), DimensionError);
}

TEST(PredictTest, ShapesCausalityDeterminism) {
  const RnntModel m(tiny_config(4), 5);
  EXPECT_EQ(predict(m, {}).rows(), 1u);
  const NumArray a = predict(m, {1, 2, 3});
  const NumArray b = predict(m, {1, 2, 4});
  EXPECT_EQ(a.rows(), 4u);
  for (size_t u = 0; u < 3; ++u) {
    for (size_t j = 0; j < a.cols(); ++j) EXPECT_EQ(a.at(u, j), b.at(u, j));
  }
  EXPECT_NE(a.at(3, 0), b.at(3, 0));
  EXPECT_EQ(predict(m, {1, 2, 3}), a);
  EXPECT_THROW(predict(m, {1, 0}), ArgumentError);
  EXPECT_THROW(predict(m, {5}), ArgumentError);
}

TEST(PredictTest, IncrementalStepsMatchSequenceRun) {
  const RnntModel m(tiny_config(4), 5);
  const TokenSeq y{2, 4, 1};
  const NumArray g = predict(m, y);
  DecoderState s = decoder_step(m, 0, nullptr);
  for (size_t j = 0; j < g.cols(); ++j) EXPECT_NEAR(s.output[j], g.at(0, j), 1e-12);
  for (size_t u = 0; u < y.size(); ++u) {
    s = decoder_step(m, y[u], &s);
    for (size_t j = 0; j < g.cols(); ++j) EXPECT_NEAR(s.output[j], g.at(u + 1, j), 1e-12);
  }
}

TEST(JointTest, OutputLengthAndZeroWeightsGiveBias) {
  RnntModel m(tiny_config(3), 9);
  Rng rng(3);
  const NumArray f = random_array({4}, rng), g = random_array({4}, rng);
  EXPECT_EQ(joint(m, f.data(), g.data()).size(), 4u);
  m.params().value(names::kJointOut).fill(0.0);
  m.params().value(names::kJointOutBias) = NumArray::vector({0.5, -1, 2, 3});
  EXPECT_EQ(joint(m, f.data(), g.data()), NumArray::vector({0.5, -1, 2, 3}));
  EXPECT_THROW(joint(m, random_array({5}, rng).data(), g.data()), DimensionError);
}

TEST(JointTest, GradientMatchesFiniteDifferences) {
  RnntModel m(tiny_config(3, 5), 10);
  Rng rng(4);
  NumArray f = random_array({5}, rng), g = random_array({5}, rng);
  const NumArray up = random_array({4}, rng);
  m.params().zero_grad();
  const JointInputGrads ig = joint_backward(m, f.data(), g.data(), up.data());
  auto obj = [&] {
    const NumArray z = joint(m, f.data(), g.data());
    double s = 0.0;
    for (size_t k = 0; k < z.size(); ++k) s += up[k] * z[k];
    return s;
  };
  for (auto &[name, p] : m.params()) {
    if (p.component != Component::joint) continue;
    for (size_t i = 0; i < p.value.size(); ++i) {
      EXPECT_LE(relative_error(p.grad[i], central_difference(obj, &p.value[i])), 1e-6) << name;
    }
  }
  for (size_t j = 0; j < 5; ++j) {
    EXPECT_LE(relative_error(ig.f[j], central_difference(obj, &f[j])), 1e-6);
    EXPECT_LE(relative_error(ig.g[j], central_difference(obj, &g[j])), 1e-6);
  }
}

// Joint rigged to emit uniform logits everywhere.
RnntModel uniform_model(size_t V) {
  RnntModel m(tiny_config(V), 17);
  m.params().value(names::kJointOut).fill(0.0);
  m.params().value(names::kJointOutBias).fill(0.0);
  return m;
}

TEST(RnntLossTest, SingleNodeLatticeIsBlankLogProb) {
  RnntModel m(tiny_config(3), 2);
  Rng rng(6);
  const NumArray x = random_array({1, 3}, rng);
  const NumArray lp = log_softmax(joint(m, encode_audio(m, x).row(0), predict(m, {}).row(0)));
  EXPECT_NEAR(rnnt_loss(m, x, {}), -lp[0], 1e-12);
}

TEST(RnntLossTest, UniformLogitsTwoFramesOneLabel) {
  RnntModel m = uniform_model(1);
  Rng rng(7);
  // Two alignments, each with three transitions of probability 1/2.
  EXPECT_EQ(testing::alignment_count(2, 1), 2u);
  EXPECT_NEAR(rnnt_loss(m, random_array({2, 3}, rng), {1}), std::log(4.0), 1e-12);
}

TEST(RnntLossTest, MatchesPathEnumerationOnRandomTinyInstances) {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const size_t V = 1 + rng.index(3), T = 1 + rng.index(4), U = rng.index(4);
    RnntModel m(tiny_config(V), 100 + trial);
    const NumArray x = random_array({T, 3}, rng, 2.0);
    const TokenSeq y = random_targets(U, V, rng);
    const double loss = rnnt_loss(m, x, y);
    EXPECT_NEAR(loss, brute_force_loss(m, x, y), 1e-9) << "T=" << T << " U=" << U << " V=" << V;
    EXPECT_GE(loss, 0.0);
    EXPECT_TRUE(std::isfinite(loss));
  }
}

TEST(RnntLossTest, GradientsMatchFiniteDifferencesOnTinyInstances) {
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const size_t V = 1 + rng.index(3), T = 1 + rng.index(4), U = rng.index(4);
    RnntModel m(tiny_config(V, 3), 200 + trial);
    const NumArray x = random_array({T, 3}, rng, 2.0);
    const TokenSeq y = random_targets(U, V, rng);
    m.params().zero_grad();
    rnnt_loss(m, x, y);
    auto f = [&] { return rnnt_loss_value(m, x, y); };
    for (auto &[name, p] : m.params()) {
      for (size_t i = 0; i < p.value.size(); ++i) {
        EXPECT_LE(relative_error(p.grad[i], central_difference(f, &p.value[i])), 1e-5)
            << name << "[" << i << "] T=" << T << " U=" << U;
      }
    }
  }
}

TEST(RnntLossTest, EncoderGradientThroughThreeFrames) {
  RnntModel m(tiny_config(2, 4), 31);
  Rng rng(10);
  const NumArray x = random_array({3, 3}, rng);
  const TokenSeq y{1, 2};
  m.params().zero_grad();
  rnnt_loss(m, x, y);
  auto f = [&] { return rnnt_loss_value(m, x, y); };
  for (auto &[name, p] : m.params()) {
    if (p.component != Component::encoder) continue;
    for (size_t i = 0; i < p.value.size(); ++i) {
      EXPECT_LE(relative_error(p.grad[i], central_difference(f, &p.value[i])), 1e-5) << name;
    }
  }
}

TEST(RnntLossTest, GradScaleScalesGradients) {
  RnntModel m(tiny_config(2), 12);
  Rng rng(11);
  const NumArray x = random_array({4, 3}, rng);
  m.params().zero_grad();
  rnnt_loss(m, x, {1, 2}, 1.0);
  const NumArray g1 = m.params().grad(names::kJointOut);
  m.params().zero_grad();
  rnnt_loss(m, x, {1, 2}, 0.25);
  const NumArray &g2 = m.params().grad(names::kJointOut);
  for (size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g2[i], 0.25 * g1[i], 1e-15);
}

TEST(RnntLossTest, RunningBackwardTwiceDoublesGradients) {
  RnntModel m(tiny_config(3), 13);
  Rng rng(12);
  const NumArray x = random_array({5, 3}, rng);
  m.params().zero_grad();
  rnnt_loss(m, x, {1, 3, 2});
  std::vector<NumArray> once;
  for (auto &[name, p] : m.params()) once.push_back(p.grad);
  rnnt_loss(m, x, {1, 3, 2});
  size_t k = 0;
  for (auto &[name, p] : m.params()) {
    for (size_t i = 0; i < p.grad.size(); ++i) ASSERT_EQ(p.grad[i], 2.0 * once[k][i]) << name;
    ++k;
  }
}

TEST(RnntLossTest, InvalidInputsRejected) {
  RnntModel m(tiny_config(2), 12);
  EXPECT_THROW(rnnt_loss(m, NumArray({0, 3}), {1}), ArgumentError);
  EXPECT_THROW(rnnt_loss(m, NumArray({2, 3}), {0}), ArgumentError);
}

TEST(LatticeTest, ComputeLatticeMatchesEnumerationOnRandomTables) {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t T = 1 + rng.index(4), U = rng.index(4);
    NumArray blank({T, U + 1}), label({T, U});
    for (double &v : blank.values()) v = std::log(rng.uniform(0.01, 1.0));
    for (double &v : label.values()) v = std::log(rng.uniform(0.01, 1.0));
    const double oracle = brute_force_log_likelihood(
        T, U, [&](size_t t, size_t u) { return blank.at(t, u); },
        [&](size_t t, size_t u) { return label.at(t, u); });
    const LossLattice L = compute_lattice(blank, label);
    EXPECT_NEAR(L.total, oracle, 1e-9);
  }
}

TEST(LatticeTest, ForwardBackwardConsistency) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t V = 1 + rng.index(3), T = 1 + rng.index(5), U = rng.index(4);
    RnntModel m(tiny_config(V), 300 + trial);
    LossLattice L = rnnt_lattice(m, random_array({T, 3}, rng), random_targets(U, V, rng));
    EXPECT_EQ(L.alpha.at(0, 0), 0.0);
    EXPECT_NEAR(L.beta.at(0, 0), L.total, 1e-8);
    EXPECT_NEAR(L.alpha.at(T - 1, U) + L.beta.at(T - 1, U), L.total, 1e-8);
    for (size_t t = 0; t < T; ++t) {
      for (size_t u = 0; u <= U; ++u) EXPECT_LE(L.alpha.at(t, u) + L.beta.at(t, u), L.total + 1e-8);
    }
    // Every alignment crosses each anti-diagonal t + u = n exactly once.
    for (size_t n = 0; n + 1 <= T + U; ++n) {
      double mass = 0.0;
      for (size_t t = 0; t < T; ++t) {
        if (n >= t && n - t <= U) mass += L.occupancy(t, n - t);
      }
      EXPECT_NEAR(mass, 1.0, 1e-6) << "cut " << n;
    }
  }
}

TEST(LatticeTest, InteriorNodesCarryOnlyTheirShareOfTheMass) {
  // With T=2, U=1 and uniform transitions, node (0,1) lies on one of the two
  // alignments, so alpha + beta there is total + log(1/2).
  RnntModel m = uniform_model(1);
  Rng rng(14);
  const LossLattice L = rnnt_lattice(m, random_array({2, 3}, rng), {1});
  EXPECT_NEAR(L.alpha.at(0, 1) + L.beta.at(0, 1) - L.total, std::log(0.5), 1e-12);
}

TEST(FullModelGradientTest, RandomCoordinatesPerComponent) {
  ModelConfig c = tiny_config(4, 6);
  c.feature_dim = 5;
  RnntModel m(c, 77);
  Rng rng(15);
  const NumArray x = random_array({6, 5}, rng);
  const TokenSeq y{3, 1, 4};
  m.params().zero_grad();
  rnnt_loss(m, x, y);
  auto f = [&] { return rnnt_loss_value(m, x, y); };
  for (Component comp : kAllComponents) {
    std::vector<std::pair<Parameter *, size_t>> coords;
    for (auto &[name, p] : m.params()) {
      if (p.component != comp) continue;
      for (size_t i = 0; i < p.value.size(); ++i) coords.emplace_back(&p, i);
    }
    for (int k = 0; k < 25; ++k) {
      auto [p, i] = coords[rng.index(coords.size())];
      EXPECT_LE(relative_error(p->grad[i], central_difference(f, &p->value[i])), 1e-4)
          << component_name(comp);
    }
  }
}

// Decoder rigged so that g_0 favours label 1 and g_1 favours blank.
RnntModel rigged_decoder_model() {
  ModelConfig c = tiny_config(2, 4);
  RnntModel m(c, 1);
  ParamTree &p = m.params();
  for (auto &[name, param] : p) param.value.fill(0.0);
  NumArray &wx = p.value("decoder.lstm0.w_x");
  NumArray &b = p.value("decoder.lstm0.bias");
  for (size_t j = 0; j < 4; ++j) {
    wx.at(8 + j, j) = 1.0;  // candidate = tanh(x)
    b[j] = 10.0;            // input gate open
    b[4 + j] = -10.0;       // forget gate closed
    b[12 + j] = 10.0;       // output gate open
  }
  NumArray &emb = p.value(names::kEmbedding);
  emb.at(0, 0) = 2.0;
  emb.at(1, 0) = -2.0;
  NumArray &dec = p.value(names::kJointDec);
  for (size_t j = 0; j < 4; ++j) dec.at(j, j) = 1.0;
  p.value(names::kJointOut).at(1, 0) = 5.0;
  return m;
}

TEST(GreedyDecodeTest, HandRiggedJointEmitsOneLabelThenBlanks) {
  const RnntModel m = rigged_decoder_model();
  Rng rng(16);
  EXPECT_EQ(greedy_decode(m, random_array({4, 3}, rng)), (TokenSeq{1}));
}

TEST(GreedyDecodeTest, BlankAlwaysWinningGivesEmptyOutput) {
  RnntModel m = uniform_model(3);
  Rng rng(17);
  // All logits tie; blank wins ties.
  EXPECT_TRUE(greedy_decode(m, random_array({5, 3}, rng)).empty());
  m.params().value(names::kJointOutBias)[0] = 3.0;
  EXPECT_TRUE(greedy_decode(m, random_array({5, 3}, rng)).empty());
}

TEST(GreedyDecodeTest, EmissionCapBoundsOutputLength) {
  RnntModel m = uniform_model(3);
  m.params().value(names::kJointOutBias)[2] = 4.0;
  Rng rng(18);
  for (size_t cap : {1u, 2u, 5u}) {
    const TokenSeq out = greedy_decode(m, random_array({3, 3}, rng), cap);
    EXPECT_EQ(out.size(), 3 * cap);
  }
  Rng r2(19);
  RnntModel random_model(tiny_config(3), 4);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t T = 1 + r2.index(6);
    EXPECT_LE(greedy_decode(random_model, random_array({T, 3}, r2, 3.0), 2).size(), 2 * T);
  }
  EXPECT_THROW(greedy_decode(m, random_array({3, 3}, rng), 0), ArgumentError);
  EXPECT_THROW(greedy_decode(m, NumArray({0, 3})), ArgumentError);
}

}  // namespace
}  // namespace rnnt_oov
