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

#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "rnnt_oov/tts_proxy.hpp"
#include "test_support.hpp"

namespace rnnt_oov {
namespace {

using testing::scratch_dir;

Vocab letters() { return build_vocab({"abcdefghijklm nopqrstuvwxyz"}, VocabMode::character); }

TEST(RenderTest, FrameCountIsTokensTimesFramesPerToken) {
  const Vocab v = letters();
  const NumArray f = render("abc", SpeakerProfile::identity(kDefaultFeatureDim), v, 1);
  EXPECT_EQ(f.rows(), 6u);
  EXPECT_EQ(f.cols(), kDefaultFeatureDim);
  RenderOptions opt;
  opt.frames_per_token = 3;
  opt.feature_dim = 5;
  const NumArray g = render("ab c", SpeakerProfile::identity(5), v, 1, opt);
  EXPECT_EQ(g.rows(), 12u);
  EXPECT_THROW(render("ab", SpeakerProfile::identity(4), v, 1), DimensionError);
}

TEST(RenderTest, SeededAndDistinctPatterns) {
  const Vocab v = letters();
  const auto spk = SpeakerProfile::identity(kDefaultFeatureDim, 0.1);
  EXPECT_EQ(render("abc", spk, v, 7), render("abc", spk, v, 7));
  EXPECT_NE(render("abc", spk, v, 7), render("abc", spk, v, 8));
  const RenderOptions opt;
  for (int a = 1; a <= 26; ++a) {
    for (int b = a + 1; b <= 26; ++b) EXPECT_NE(token_pattern(a, opt), token_pattern(b, opt)) << a << " " << b;
  }
}

TEST(RenderTest, IdentityProfileWithoutNoiseGivesBaseFeatures) {
  const Vocab v = letters();
  const NumArray f = render("hello", SpeakerProfile::identity(kDefaultFeatureDim), v, 3);
  const NumArray b = base_features(encode("hello", v));
  ASSERT_EQ(f.shape(), b.shape());
  for (size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f.values()[i], b.values()[i], 1e-12);
}

TEST(RenderTest, RepeatedFramesWithinAToken) {
  const Vocab v = letters();
  const NumArray b = base_features(encode("ab", v));
  for (size_t j = 0; j < b.cols(); ++j) {
    EXPECT_EQ(b.at(0, j), b.at(1, j));
    EXPECT_EQ(b.at(2, j), b.at(3, j));
  }
  EXPECT_THROW(base_features({}), ArgumentError);
}

TEST(SpeakerTest, PoolProfilesAreDistinctAndWellConditioned) {
  const VoiceConfig vc;
  const auto pool = real_speaker_pool(vc, kDefaultFeatureDim, 1);
  ASSERT_EQ(pool.size(), vc.real_speakers);
  for (size_t i = 0; i < pool.size(); ++i) {
    EXPECT_LE(condition_number(pool[i].transform), SpeakerProfile::kMaxCondition);
    EXPECT_NO_THROW(pool[i].validate());
    for (size_t j = i + 1; j < pool.size(); ++j) EXPECT_NE(pool[i].transform, pool[j].transform);
  }
  const auto tts = tts_speaker(vc, kDefaultFeatureDim, 1);
  EXPECT_NO_THROW(tts.validate());
  EXPECT_LE(condition_number(tts.transform), 1.0 + 1e-9);
  const Vocab v = letters();
  EXPECT_NE(render("abc", pool[0], v, 1), render("abc", pool[1], v, 1));
}

TEST(SpeakerTest, IllConditionedTransformRejected) {
  SpeakerProfile p = SpeakerProfile::identity(3);
  p.transform.at(2, 2) = 1e-4;
  EXPECT_THROW(p.validate(), ArgumentError);
  SpeakerProfile q = SpeakerProfile::identity(3);
  q.noise_std = -1.0;
  EXPECT_THROW(q.validate(), ArgumentError);
}

TEST(SpeakerTest, CorpusSpreadsUtterancesOverSpeakers) {
  const auto dir = scratch_dir("tts_spread");
  const Vocab v = letters();
  const auto pool = real_speaker_pool(VoiceConfig{}, kDefaultFeatureDim, 1);
  std::vector<size_t> speaker_of;
  const Manifest m = make_corpus(std::vector<std::string>(1000, "a"), pool, v, 5, dir, "x", {}, &speaker_of);
  ASSERT_EQ(m.size(), 1000u);
  std::vector<size_t> counts(pool.size());
  for (size_t s : speaker_of) ++counts[s];
  for (size_t c : counts) {
    EXPECT_GE(c, 60u);
    EXPECT_LE(c, 140u);
  }
}

TEST(FeatureFileTest, RoundTripAndErrors) {
  const auto dir = scratch_dir("feat_io");
  NumArray f({3, 2}, {0.5, -1.25, 2.0, 3.5, -0.125, 8.0});
  write_features(dir / "a.feat", f);
  EXPECT_EQ(read_features(dir / "a.feat"), f);
  EXPECT_THROW(read_features(dir / "missing.feat"), IoError);
  std::ofstream(dir / "junk.feat") << "not a feature file";
  EXPECT_THROW(read_features(dir / "junk.feat"), FormatError);
  {
    std::string bytes;
    std::ifstream in(dir / "a.feat", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
    std::ofstream(dir / "short.feat", std::ios::binary) << bytes.substr(0, bytes.size() - 2);
    std::ofstream(dir / "long.feat", std::ios::binary) << bytes << 'x';
  }
  EXPECT_THROW(read_features(dir / "short.feat"), FormatError);
  EXPECT_THROW(read_features(dir / "long.feat"), FormatError);
}

// Per-token nearest-neighbour codebook of frames rendered by the real pool.
class Codebook {
 public:
  void add(const TokenSeq &tokens, const NumArray &frames, size_t frames_per_token) {
    for (size_t t = 0; t < frames.rows(); ++t) {
      book_[tokens[t / frames_per_token]].emplace_back(frames.row(t).begin(), frames.row(t).end());
    }
  }

  /// Mean per-dimension squared distance to the nearest stored frame of the same token.
  double error(const TokenSeq &tokens, const NumArray &frames, size_t frames_per_token) const {
    double sum = 0.0;
    for (size_t t = 0; t < frames.rows(); ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto &f : book_.at(tokens[t / frames_per_token])) {
        double d = 0.0;
        for (size_t j = 0; j < f.size(); ++j) d += (f[j] - frames.row(t)[j]) * (f[j] - frames.row(t)[j]);
        best = std::min(best, d);
      }
      sum += best / static_cast<double>(frames.cols());
    }
    return sum / static_cast<double>(frames.rows());
  }

 private:
  std::map<int, std::vector<std::vector<double>>> book_;
};

TEST(MismatchTest, SyntheticVoiceIsFurtherFromRealFramesThanHeldOutRealSpeech) {
  const std::vector<std::string> words = {"play", "stop", "music", "light", "timer", "covid", "zoom"};
  Rng rng(3);
  auto sentence = [&] {
    std::string s;
    for (int i = 0; i < 3; ++i) s += (i ? " " : "") + words[rng.index(words.size())];
    return s;
  };
  const Vocab v = build_vocab({"play stop music light timer covid zoom"}, VocabMode::character);
  const VoiceConfig vc;
  const RenderOptions opt;
  const auto pool = real_speaker_pool(vc, opt.feature_dim, 1);
  const auto tts = tts_speaker(vc, opt.feature_dim, 1);

  Codebook book;
  for (size_t i = 0; i < 400; ++i) {
    const std::string text = sentence();
    const TokenSeq tok = encode(text, v);
    book.add(tok, render(text, pool[i % pool.size()], v, mix_seed(11, i), opt), opt.frames_per_token);
  }
  double real = 0.0, synth = 0.0;
  const size_t held = 60;
  for (size_t i = 0; i < held; ++i) {
    const std::string text = sentence();
    const TokenSeq tok = encode(text, v);
    real += book.error(tok, render(text, pool[(i * 7) % pool.size()], v, mix_seed(12, i), opt), opt.frames_per_token);
    synth += book.error(tok, render(text, tts, v, mix_seed(13, i), opt), opt.frames_per_token);
  }
  EXPECT_GT(synth / held, real / held);
}

}  // namespace
}  // namespace rnnt_oov
