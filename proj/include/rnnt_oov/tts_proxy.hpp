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

// Text-to-feature renderer. Every token id owns a fixed random frame pattern;
// a speaker profile applies an affine channel and additive noise. The "real"
// pool has several noisy speakers, the synthetic voice is a single clean
// channel that none of them shares.

#ifndef RNNT_OOV_TTS_PROXY_HPP
#define RNNT_OOV_TTS_PROXY_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rnnt_oov/dataset.hpp"
#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/tokenizer.hpp"

namespace rnnt_oov {

static_assert(std::endian::native == std::endian::little, "feature and checkpoint I/O assume little-endian");

inline constexpr size_t kDefaultFeatureDim = 16;
inline constexpr size_t kDefaultFramesPerToken = 2;

struct RenderOptions {
  size_t feature_dim = kDefaultFeatureDim;
  size_t frames_per_token = kDefaultFramesPerToken;
  double pattern_scale = 1.0;  // std of the per-token patterns
  uint64_t pattern_seed = 0x5eedf00d;
  // With groups > 0 each token id hashes to one of `pattern_groups` shared
  // centroids and gets a private offset of relative size `group_spread`, so
  // tokens in a group are acoustically confusable.
  size_t pattern_groups = 9;
  double group_spread = 0.1;
};

inline double condition_number(const NumArray &m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(kernels::view(m));
  const auto &s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

struct SpeakerProfile {
  static constexpr double kMaxCondition = 100.0;

  std::string id;
  NumArray transform;  // D x D, frame' = transform * frame + bias
  std::vector<double> bias;
  double noise_std = 0.0;

  size_t dim() const { return bias.size(); }

  void validate() const {
    const size_t D = bias.size();
    if (transform.rank() != 2 || transform.rows() != D || transform.cols() != D) {
      throw DimensionError("speaker " + id + ": transform must be D x D with D = bias size");
    }
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) {
      throw ArgumentError("speaker " + id + ": noise_std must be finite and >= 0");
    }
    if (!(condition_number(transform) <= kMaxCondition)) {
      throw ArgumentError("speaker " + id + ": transform is ill-conditioned");
    }
  }

  static SpeakerProfile identity(size_t dim, double noise_std = 0.0, std::string id = "identity") {
    SpeakerProfile p{std::move(id), NumArray({dim, dim}), std::vector<double>(dim, 0.0), noise_std};
    for (size_t i = 0; i < dim; ++i) p.transform.at(i, i) = 1.0;
    return p;
  }
};

/// Feature pattern of one token id.
inline std::vector<double> token_pattern(int id, const RenderOptions &opt) {
  const auto key = static_cast<uint64_t>(id);
  Rng rng(mix_seed(opt.pattern_seed, key));
  std::vector<double> p(opt.feature_dim);
  if (opt.pattern_groups == 0) {
    for (double &v : p) v = opt.pattern_scale * rng.normal();
    return p;
  }
  const uint64_t group = mix_seed(opt.pattern_seed ^ 0x67726f7570ULL, key) % opt.pattern_groups;
  Rng centre(mix_seed(opt.pattern_seed + 1, group));
  for (double &v : p) v = opt.pattern_scale * (centre.normal() + opt.group_spread * rng.normal());
  return p;
}

/// T = frames_per_token * len(tokens) frames of token patterns.
inline NumArray base_features(const TokenSeq &tokens, const RenderOptions &opt = {}) {
  if (tokens.empty()) throw ArgumentError("base_features: empty token sequence");
  if (opt.frames_per_token < 1 || opt.feature_dim < 1) {
    throw ArgumentError("base_features: frames_per_token and feature_dim must be >= 1");
  }
  NumArray out({tokens.size() * opt.frames_per_token, opt.feature_dim});
  size_t t = 0;
  for (int id : tokens) {
    const auto p = token_pattern(id, opt);
    for (size_t r = 0; r < opt.frames_per_token; ++r, ++t) std::copy(p.begin(), p.end(), out.row(t).begin());
  }
  return out;
}

/// Applies the speaker channel and seeded noise to clean frames.
inline NumArray apply_profile(const NumArray &clean, const SpeakerProfile &profile, uint64_t seed) {
  if (clean.cols() != profile.dim()) throw DimensionError("render: profile dimension mismatch");
  NumArray out({clean.rows(), clean.cols()});
  for (size_t t = 0; t < out.rows(); ++t) std::copy(profile.bias.begin(), profile.bias.end(), out.row(t).begin());
  kernels::gemm_nt_acc(clean, profile.transform, out);
  if (profile.noise_std > 0.0) {
    Rng rng(seed);
    for (double &v : out.values()) v += profile.noise_std * rng.normal();
  }
  return out;
}

inline NumArray render(const std::string &text, const SpeakerProfile &profile, const Vocab &vocab,
                       uint64_t seed, const RenderOptions &opt = {}) {
  return apply_profile(base_features(encode(text, vocab), opt), profile, seed);
}

// ---------------------------------------------------------------------------
// Speaker pools
// ---------------------------------------------------------------------------

/// Random channel I + spread * G / sqrt(D), redrawn until well conditioned.
inline SpeakerProfile random_speaker(const std::string &id, size_t dim, double spread, double bias_std,
                                     double noise_std, uint64_t seed) {
  Rng rng(seed);
  for (;;) {
    SpeakerProfile p = SpeakerProfile::identity(dim, noise_std, id);
    for (double &v : p.transform.values()) v += spread * rng.normal() / std::sqrt(static_cast<double>(dim));
    for (double &b : p.bias) b = bias_std * rng.normal();
    if (condition_number(p.transform) <= SpeakerProfile::kMaxCondition) return p;
  }
}

/// Orthogonal channel from the Cayley transform of a random skew matrix;
/// `angle` scales the skew part and so how far it rotates.
inline SpeakerProfile rotation_speaker(const std::string &id, size_t dim, double angle, double bias_std,
                                       double noise_std, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
      a(i, j) = angle * rng.normal() / std::sqrt(static_cast<double>(dim));
      a(j, i) = -a(i, j);
    }
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd q = (eye - a).partialPivLu().solve(eye + a);
  SpeakerProfile p = SpeakerProfile::identity(dim, noise_std, id);
  kernels::view(p.transform) = q;
  for (double &b : p.bias) b = bias_std * rng.normal();
  return p;
}

struct VoiceConfig {
  size_t real_speakers = 10;
  double real_spread = 0.3;
  double real_bias_std = 0.1;
  double real_noise_std = 0.1;
  double tts_angle = 0.08;
  double tts_bias_std = 0.0;
  double tts_noise_std = 0.15;
};

inline std::vector<SpeakerProfile> real_speaker_pool(const VoiceConfig &vc, size_t dim, uint64_t seed) {
  std::vector<SpeakerProfile> pool;
  for (size_t s = 0; s < vc.real_speakers; ++s) {
    std::ostringstream id;
    id << "spk" << std::setw(2) << std::setfill('0') << s;
    pool.push_back(random_speaker(id.str(), dim, vc.real_spread, vc.real_bias_std, vc.real_noise_std,
                                  mix_seed(seed, 100 + s)));
  }
  return pool;
}

inline SpeakerProfile tts_speaker(const VoiceConfig &vc, size_t dim, uint64_t seed) {
  return rotation_speaker("tts", dim, vc.tts_angle, vc.tts_bias_std, vc.tts_noise_std, mix_seed(seed, 99));
}

// ---------------------------------------------------------------------------
// Feature files: "FEAT1", u32 T, u32 D, T*D float32, all little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kFeatMagic[5] = {'F', 'E', 'A', 'T', '1'};

inline void write_features(const std::filesystem::path &path, const NumArray &frames) {
  if (frames.rank() != 2) throw DimensionError("write_features: frames must be T x D");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write feature file " + path.string());
  const auto T = static_cast<uint32_t>(frames.rows()), D = static_cast<uint32_t>(frames.cols());
  out.write(kFeatMagic, sizeof kFeatMagic);
  out.write(reinterpret_cast<const char *>(&T), 4);
  out.write(reinterpret_cast<const char *>(&D), 4);
  std::vector<float> buf(frames.values().begin(), frames.values().end());
  out.write(reinterpret_cast<const char *>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!out) throw IoError("write failed: " + path.string());
}

inline NumArray read_features(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature file " + path.string());
  char magic[sizeof kFeatMagic];
  uint32_t T = 0, D = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char *>(&T), 4);
  in.read(reinterpret_cast<char *>(&D), 4);
  if (!in || std::memcmp(magic, kFeatMagic, sizeof magic) != 0) {
    throw FormatError("not a feature file: " + path.string());
  }
  if (T == 0 || D == 0) throw FormatError("feature file has an empty dimension: " + path.string());
  std::vector<float> buf(static_cast<size_t>(T) * D);
  in.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(buf.size() * 4)) {
    throw FormatError("truncated feature file: " + path.string());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  return NumArray({T, D}, std::vector<double>(buf.begin(), buf.end()));
}

inline NumArray load_features(const Manifest &m, const Utterance &u) {
  return read_features(m.features_file(u));
}

/// Features plus encoded transcript of one utterance.
struct Example {
  NumArray features;
  TokenSeq targets;
};

inline Example load_example(const Manifest &m, const Utterance &u, const Vocab &vocab) {
  return {load_features(m, u), encode(u.text, vocab)};
}

// ---------------------------------------------------------------------------
// Corpus rendering
// ---------------------------------------------------------------------------

/// Renders texts with seeded speakers into out_dir/feats/<prefix>NNNNN.feat and
/// returns the manifest (rooted at out_dir, feature paths relative to it).
inline Manifest make_corpus(const std::vector<std::string> &texts, const std::vector<SpeakerProfile> &pool,
                            const Vocab &vocab, uint64_t seed, const std::filesystem::path &out_dir,
                            const std::string &prefix, const RenderOptions &opt = {},
                            std::vector<size_t> *speaker_of = nullptr) {
  if (pool.empty()) throw ArgumentError("make_corpus: empty speaker pool");
  for (const auto &p : pool) p.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "feats", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "feats").string() + ": " + ec.message());
  Manifest m(out_dir);
  if (speaker_of) speaker_of->clear();
  for (size_t i = 0; i < texts.size(); ++i) {
    std::ostringstream id;
    id << prefix << std::setw(5) << std::setfill('0') << i;
    const size_t spk = pool.size() == 1 ? 0 : Rng(mix_seed(seed, 2 * i)).index(pool.size());
    if (speaker_of) speaker_of->push_back(spk);
    const NumArray feats = render(texts[i], pool[spk], vocab, mix_seed(seed, 2 * i + 1), opt);
    const std::filesystem::path rel = std::filesystem::path("feats") / (id.str() + ".feat");
    write_features(out_dir / rel, feats);
    m.add({id.str(), texts[i], rel});
  }
  return m;
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_TTS_PROXY_HPP
