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

#include <gtest/gtest.h>

#include "rnnt_oov/regularization.hpp"
#include "test_support.hpp"

namespace rnnt_oov {
namespace {

using testing::scratch_dir;
using testing::tiny_config;

ParamTree two_params(double a0, double a1, double b0) {
  ParamTree p;
  p.add("enc.w", NumArray({2}, {a0, a1}), Component::encoder);
  p.add("joint.w", NumArray({1}, {b0}), Component::joint);
  return p;
}

TEST(EwcTest, HandComputedPenaltyAndGradient) {
  const ParamTree old = two_params(0, 0, 0);
  ParamTree fisher = two_params(1.0, 0.5, 3.0);
  ParamTree live = two_params(1.0, 2.0, -1.0);
  const EwcState s(snapshot_values(old), fisher, 2.0, ComponentSet::all());
  // lambda/2 * (1*1 + 0.5*4 + 3*1) = 6
  EXPECT_DOUBLE_EQ(ewc_penalty(s, live), 6.0);
  EXPECT_DOUBLE_EQ(live.grad("enc.w")[0], 2.0);
  EXPECT_DOUBLE_EQ(live.grad("enc.w")[1], 2.0);
  EXPECT_DOUBLE_EQ(live.grad("joint.w")[0], -6.0);
}

TEST(EwcTest, PenaltyIsZeroAtTheAnchor) {
  const ParamTree p = two_params(0.3, -0.7, 1.1);
  ParamTree live = snapshot_values(p);
  const EwcState s(snapshot_values(p), two_params(5, 5, 5), 100.0, ComponentSet::all());
  EXPECT_EQ(ewc_penalty(s, live), 0.0);
  for (const auto &[name, q] : live) {
    for (double g : q.grad.values()) EXPECT_EQ(g, 0.0);
  }
}

TEST(EwcTest, OutOfScopeParametersAreIgnored) {
  ParamTree live = two_params(1.0, 1.0, 1.0);
  const EwcState s(two_params(0, 0, 0), two_params(1, 1, 1), 2.0, {Component::joint});
  EXPECT_DOUBLE_EQ(ewc_penalty(s, live), 1.0);
  EXPECT_EQ(live.grad("enc.w")[0], 0.0);
  EXPECT_EQ(live.grad("enc.w")[1], 0.0);
  EXPECT_DOUBLE_EQ(live.grad("joint.w")[0], 2.0);
}

TEST(EwcTest, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  ParamTree old = two_params(rng.normal(), rng.normal(), rng.normal());
  ParamTree fisher = two_params(rng.uniform(), rng.uniform(), rng.uniform());
  ParamTree live = two_params(rng.normal(), rng.normal(), rng.normal());
  const EwcState s(old, fisher, 7.5, ComponentSet::all());
  ewc_penalty(s, live);
  for (auto &[name, p] : live) {
    for (size_t i = 0; i < p.value.size(); ++i) {
      const double numeric = testing::central_difference(
          [&] { return ewc_penalty(s, live, false); }, &p.value.values()[i], 1e-6);
      EXPECT_LT(testing::relative_error(p.grad.values()[i], numeric), 1e-8) << name << "[" << i << "]";
    }
  }
}

TEST(EwcTest, PenaltyGrowsWithDistanceFromTheAnchor) {
  const EwcState s(two_params(0, 0, 0), two_params(1, 2, 3), 1.0, ComponentSet::all());
  double last = -1.0;
  for (double r = 0.0; r <= 2.0; r += 0.25) {
    ParamTree live = two_params(r, -r, r);
    const double v = ewc_penalty(s, live, false);
    EXPECT_GT(v, last);
    last = v;
  }
}

TEST(EwcTest, RejectsBadStates) {
  EXPECT_THROW(EwcState(two_params(0, 0, 0), two_params(1, -1, 1), 1.0, ComponentSet::all()), ArgumentError);
  EXPECT_THROW(EwcState(two_params(0, 0, 0), two_params(1, 1, 1), -1.0, ComponentSet::all()), ArgumentError);
  ParamTree other;
  other.add("enc.w", NumArray({3}), Component::encoder);
  EXPECT_THROW(EwcState(two_params(0, 0, 0), other, 1.0, ComponentSet::all()), DimensionError);
  const EwcState s(two_params(0, 0, 0), two_params(1, 1, 1), 1.0, ComponentSet::all());
  EXPECT_THROW(ewc_penalty(s, other), DimensionError);
}

TEST(EwcTest, SnapshotTamperingIsDetected) {
  EwcState s(two_params(0, 0, 0), two_params(1, 1, 1), 1.0, ComponentSet::all());
  EXPECT_NO_THROW(s.verify_snapshot());
  s.theta_old.value("enc.w")[0] = 1e-9;
  EXPECT_THROW(s.verify_snapshot(), NumericError);
}

TEST(EwcTest, L2StateUsesUnitFisher) {
  const ParamTree p = two_params(1, 2, 3);
  const EwcState s = EwcState::l2(p, 4.0, ComponentSet::all());
  for (const auto &[name, f] : s.fisher) {
    for (double v : f.value.values()) EXPECT_EQ(v, 1.0);
  }
  ParamTree live = two_params(2, 2, 3);
  EXPECT_DOUBLE_EQ(ewc_penalty(s, live), 2.0);
}

class FisherTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch_dir("fisher");
    vocab_ = build_vocab({"ab ba"}, VocabMode::character);
    RenderOptions opt;
    opt.feature_dim = 3;
    opt.frames_per_token = 1;
    data_ = make_corpus({"ab", "ba a", "b"}, {SpeakerProfile::identity(3, 0.1)}, vocab_, 3, dir_, "f", opt);
  }

  std::filesystem::path dir_;
  Vocab vocab_;
  Manifest data_;
};

ParamTree squared_grad(RnntModel &model, const Manifest &m, const Utterance &u, const Vocab &v) {
  const Example ex = load_example(m, u, v);
  model.params().zero_grad();
  rnnt_loss(model, ex.features, ex.targets);
  ParamTree out = snapshot_values(model.params());
  for (auto &[name, p] : out) {
    const auto &g = model.params().grad(name).values();
    for (size_t i = 0; i < g.size(); ++i) p.value.values()[i] = g[i] * g[i];
  }
  model.params().zero_grad();
  return out;
}

TEST_F(FisherTest, SingleSampleIsTheSquaredGradient) {
  RnntModel model(tiny_config(vocab_.label_count()), 2);
  Manifest one = data_.subset({1});
  const ParamTree f = estimate_fisher(model, one, vocab_, 1, 9);
  const ParamTree g2 = squared_grad(model, one, one[0], vocab_);
  for (const auto &[name, p] : f) {
    for (size_t i = 0; i < p.value.size(); ++i) EXPECT_EQ(p.value.values()[i], g2.value(name).values()[i]);
  }
}

TEST_F(FisherTest, MeanOverDrawsMatchesPerUtteranceSquares) {
  RnntModel model(tiny_config(vocab_.label_count()), 2);
  const size_t n = 3;
  const uint64_t seed = 17;
  const ParamTree f = estimate_fisher(model, data_, vocab_, n, seed);
  Rng rng(seed);
  ParamTree expect = snapshot_values(model.params());
  for (auto &[name, p] : expect) p.value.fill(0.0);
  for (size_t k = 0; k < n; ++k) {
    const ParamTree g2 = squared_grad(model, data_, data_[rng.index(data_.size())], vocab_);
    for (auto &[name, p] : expect) {
      for (size_t i = 0; i < p.value.size(); ++i) p.value.values()[i] += g2.value(name).values()[i] / n;
    }
  }
  for (const auto &[name, p] : f) {
    for (size_t i = 0; i < p.value.size(); ++i) {
      EXPECT_NEAR(p.value.values()[i], expect.value(name).values()[i], 1e-12 * (1 + expect.value(name).values()[i]));
      EXPECT_GE(p.value.values()[i], 0.0);
    }
    for (double g : model.params().grad(name).values()) EXPECT_EQ(g, 0.0);
  }
  EXPECT_THROW(estimate_fisher(model, Manifest(), vocab_, 1, 1), ArgumentError);
  EXPECT_THROW(estimate_fisher(model, data_, vocab_, 0, 1), ArgumentError);
}

TEST(FreezeTest, ZeroesOnlyFrozenComponents) {
  ParamTree p = two_params(1, 1, 1);
  p.grad("enc.w").fill(3.0);
  p.grad("joint.w").fill(4.0);
  apply_freeze(p, {{Component::encoder}});
  EXPECT_EQ(p.grad("enc.w")[0], 0.0);
  EXPECT_EQ(p.grad("enc.w")[1], 0.0);
  EXPECT_EQ(p.grad("joint.w")[0], 4.0);
  apply_freeze(p, {});
  EXPECT_EQ(p.grad("joint.w")[0], 4.0);
  apply_freeze(p, {ComponentSet::all()});
  EXPECT_EQ(p.grad("joint.w")[0], 0.0);
}

}  // namespace
}  // namespace rnnt_oov
