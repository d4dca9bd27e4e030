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

// RNN transducer: LSTM encoder over feature frames, LSTM prediction network
// over emitted labels, and a one-hidden-layer joint network
//
//   logits(t, u) = W_out tanh(W_enc f_t + W_dec g_u + b) + b_out
//
// The loss is computed exactly by forward-backward over the T x (U+1)
// alignment lattice in log space; gradients come from the lattice posteriors
// and are propagated by hand through the joint, the prediction network and
// the encoder.

#ifndef RNNT_OOV_RNNT_MODEL_HPP
#define RNNT_OOV_RNNT_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/tokenizer.hpp"

namespace rnnt_oov {

struct ModelConfig {
  size_t encoder_layers = 2;
  size_t encoder_width = 64;
  size_t decoder_layers = 1;
  size_t decoder_width = 64;
  size_t joint_width = 64;
  size_t feature_dim = 16;
  size_t vocab_size = 0;  // V, blank excluded

  size_t output_size() const { return vocab_size + 1; }

  void validate() const {
    if (encoder_layers < 1 || encoder_width < 1 || decoder_layers < 1 || decoder_width < 1 ||
        joint_width < 1 || feature_dim < 1 || vocab_size < 1) {
      throw ConfigError("model config: all sizes must be >= 1");
    }
  }

  nlohmann::json to_json() const {
    return {{"encoder_layers", encoder_layers}, {"encoder_width", encoder_width},
            {"decoder_layers", decoder_layers}, {"decoder_width", decoder_width},
            {"joint_width", joint_width},       {"feature_dim", feature_dim},
            {"vocab_size", vocab_size}};
  }

  static ModelConfig from_json(const nlohmann::json &j) {
    ModelConfig c;
    c.encoder_layers = j.at("encoder_layers").get<size_t>();
    c.encoder_width = j.at("encoder_width").get<size_t>();
    c.decoder_layers = j.at("decoder_layers").get<size_t>();
    c.decoder_width = j.at("decoder_width").get<size_t>();
    c.joint_width = j.at("joint_width").get<size_t>();
    c.feature_dim = j.at("feature_dim").get<size_t>();
    c.vocab_size = j.at("vocab_size").get<size_t>();
    c.validate();
    return c;
  }

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

namespace names {
inline std::string encoder_lstm(size_t l) { return "encoder.lstm" + std::to_string(l); }
inline std::string decoder_lstm(size_t l) { return "decoder.lstm" + std::to_string(l); }
inline const std::string kEmbedding = "decoder.embedding";
inline const std::string kJointEnc = "joint.enc_proj";
inline const std::string kJointDec = "joint.dec_proj";
inline const std::string kJointBias = "joint.bias";
inline const std::string kJointOut = "joint.out";
inline const std::string kJointOutBias = "joint.out_bias";
}  // namespace names

class RnntModel {
 public:
  /// Fresh model with seeded uniform initialization.
  RnntModel(const ModelConfig &config, uint64_t seed) : config_(config), params_(layout(config)) {
    init_uniform(params_, seed, [this](const std::string &name, const NumArray &v) {
      return fan_in(name, v);
    });
  }

  /// Model around existing parameters; the layout must match the config.
  RnntModel(const ModelConfig &config, ParamTree params)
      : config_(config), params_(std::move(params)) {
    if (!params_.same_layout(layout(config_))) {
      throw DimensionError("RnntModel: parameter layout does not match config");
    }
  }

  const ModelConfig &config() const { return config_; }
  ParamTree &params() { return params_; }
  const ParamTree &params() const { return params_; }

  /// Parameter names, shapes and component tags for a config.
  static ParamTree layout(const ModelConfig &c) {
    c.validate();
    ParamTree p;
    auto add_lstm = [&](const std::string &prefix, size_t in, size_t h, Component comp) {
      p.add(prefix + ".w_x", {4 * h, in}, comp);
      p.add(prefix + ".w_h", {4 * h, h}, comp);
      p.add(prefix + ".bias", {4 * h}, comp);
    };
    for (size_t l = 0; l < c.encoder_layers; ++l) {
      add_lstm(names::encoder_lstm(l), l == 0 ? c.feature_dim : c.encoder_width, c.encoder_width,
               Component::encoder);
    }
    // Row 0 is the learned start symbol; rows 1..V embed labels.
    p.add(names::kEmbedding, {c.output_size(), c.decoder_width}, Component::decoder);
    for (size_t l = 0; l < c.decoder_layers; ++l) {
      add_lstm(names::decoder_lstm(l), c.decoder_width, c.decoder_width, Component::decoder);
    }
    p.add(names::kJointEnc, {c.joint_width, c.encoder_width}, Component::joint);
    p.add(names::kJointDec, {c.joint_width, c.decoder_width}, Component::joint);
    p.add(names::kJointBias, {c.joint_width}, Component::joint);
    p.add(names::kJointOut, {c.output_size(), c.joint_width}, Component::joint);
    p.add(names::kJointOutBias, {c.output_size()}, Component::joint);
    return p;
  }

 private:
  size_t fan_in(const std::string &name, const NumArray &v) const {
    if (name == names::kEmbedding) return 1;
    if (name == names::kJointBias) return config_.encoder_width;
    if (name == names::kJointOutBias) return config_.joint_width;
    if (v.rank() == 2) return v.cols();
    // LSTM biases: fan-in of the recurrent weights.
    return v.size() / 4;
  }

  ModelConfig config_;
  ParamTree params_;
};

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

namespace detail {

/// Per-layer activations kept for the backward pass over a whole sequence.
struct LstmLayerCache {
  NumArray input;   // T x In
  NumArray gates;   // T x 4H, post-activation
  NumArray cell;    // T x H
  NumArray tanh_c;  // T x H
  NumArray hidden;  // T x H
};

/// One LSTM layer over a sequence. Input projections for all frames are done
/// as a single product; only the recurrent part runs step by step.
inline NumArray run_lstm_layer(const LstmWeights &w, const NumArray &input, LstmLayerCache *cache) {
  const size_t T = input.rows(), H = w.hidden();
  if (input.cols() != w.input()) throw DimensionError("lstm stack: input width mismatch");
  NumArray z({T, 4 * H});
  for (size_t t = 0; t < T; ++t) std::copy_n(w.bias.values().begin(), 4 * H, z.row(t).begin());
  kernels::gemm_nt_acc(input, w.w_x, z);
  NumArray cell({T, H}), tanh_c({T, H}), out({T, H});
  std::vector<double> zero(H, 0.0);
  for (size_t t = 0; t < T; ++t) {
    auto zt = z.row(t);
    std::span<const double> h_prev = t > 0 ? std::span<const double>(out.row(t - 1)) : zero;
    std::span<const double> c_prev = t > 0 ? std::span<const double>(cell.row(t - 1)) : zero;
    kernels::gemv_acc(w.w_h, h_prev, zt);
    auto ct = cell.row(t), tct = tanh_c.row(t), ht = out.row(t);
    for (size_t j = 0; j < H; ++j) {
      zt[j] = kernels::sigmoid(zt[j]);
      zt[H + j] = kernels::sigmoid(zt[H + j]);
      zt[2 * H + j] = std::tanh(zt[2 * H + j]);
      zt[3 * H + j] = kernels::sigmoid(zt[3 * H + j]);
      ct[j] = zt[H + j] * c_prev[j] + zt[j] * zt[2 * H + j];
      tct[j] = std::tanh(ct[j]);
      ht[j] = zt[3 * H + j] * tct[j];
    }
  }
  if (cache) *cache = LstmLayerCache{input, std::move(z), std::move(cell), std::move(tanh_c), out};
  return out;
}

/// Accumulates weight gradients for d(output) and returns d(input).
inline NumArray backprop_lstm_layer(const LstmWeights &w, LstmGrads &g, const LstmLayerCache &cache,
                                    const NumArray &d_out) {
  const size_t T = cache.hidden.rows(), H = w.hidden();
  NumArray dz({T, 4 * H});
  std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0);
  for (size_t t = T; t-- > 0;) {
    const auto gt = cache.gates.row(t), tct = cache.tanh_c.row(t), dout = d_out.row(t);
    auto dzt = dz.row(t);
    for (size_t j = 0; j < H; ++j) {
      const double i = gt[j], f = gt[H + j], cand = gt[2 * H + j], o = gt[3 * H + j];
      const double c_prev = t > 0 ? cache.cell.at(t - 1, j) : 0.0;
      const double dh = dout[j] + dh_next[j];
      const double dct = dc_next[j] + dh * o * (1.0 - tct[j] * tct[j]);
      dzt[j] = dct * cand * i * (1.0 - i);
      dzt[H + j] = dct * c_prev * f * (1.0 - f);
      dzt[2 * H + j] = dct * i * (1.0 - cand * cand);
      dzt[3 * H + j] = dh * tct[j] * o * (1.0 - o);
      dc_next[j] = dct * f;
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    kernels::gemv_t_acc(w.w_h, dzt, dh_next);
  }
  kernels::gemm_tn_acc(dz, cache.input, g.w_x);
  kernels::colsum_acc(dz, g.bias.data());
  if (T > 1) {
    // h_{t-1} pairs with dz_t; h_{-1} = 0 contributes nothing.
    const auto first = static_cast<Eigen::Index>(T - 1);
    kernels::view(g.w_h).noalias() +=
        kernels::view(dz).bottomRows(first).transpose() * kernels::view(cache.hidden).topRows(first);
  }
  NumArray d_in({T, w.input()});
  kernels::gemm_nn_acc(dz, w.w_x, d_in);
  return d_in;
}

/// Runs a stack of LSTM layers over a sequence, optionally caching activations.
inline NumArray run_lstm_stack(const ParamTree &params, const std::vector<std::string> &prefixes,
                               NumArray input, std::vector<LstmLayerCache> *caches) {
  if (caches) caches->assign(prefixes.size(), {});
  for (size_t l = 0; l < prefixes.size(); ++l) {
    input = run_lstm_layer(LstmWeights::from(params, prefixes[l]), input,
                           caches ? &(*caches)[l] : nullptr);
  }
  return input;
}

/// Backpropagates d(output) through a cached stack; returns d(input).
inline NumArray backprop_lstm_stack(ParamTree &params, const std::vector<std::string> &prefixes,
                                    const std::vector<LstmLayerCache> &caches, NumArray d_out) {
  for (size_t l = prefixes.size(); l-- > 0;) {
    LstmGrads g = LstmGrads::from(params, prefixes[l]);
    d_out = backprop_lstm_layer(LstmWeights::from(params, prefixes[l]), g, caches[l], d_out);
  }
  return d_out;
}

inline std::vector<std::string> encoder_prefixes(const ModelConfig &c) {
  std::vector<std::string> p;
  for (size_t l = 0; l < c.encoder_layers; ++l) p.push_back(names::encoder_lstm(l));
  return p;
}

inline std::vector<std::string> decoder_prefixes(const ModelConfig &c) {
  std::vector<std::string> p;
  for (size_t l = 0; l < c.decoder_layers; ++l) p.push_back(names::decoder_lstm(l));
  return p;
}

inline void check_features(const ModelConfig &c, const NumArray &features) {
  if (features.rank() != 2) throw DimensionError("features must be a T x feature_dim array");
  if (features.rows() == 0) throw ArgumentError("features: empty frame sequence");
  if (features.cols() != c.feature_dim) throw DimensionError("features: frame width mismatch");
}

inline void check_targets(const ModelConfig &c, const TokenSeq &targets) {
  for (int y : targets) {
    if (y == Vocab::kBlank) throw ArgumentError("targets must not contain blank");
    if (y < 0 || static_cast<size_t>(y) > c.vocab_size) {
      throw ArgumentError("target id out of range: " + std::to_string(y));
    }
  }
}

}  // namespace detail

/// Encoder states f_1..f_T as a T x encoder_width array.
inline NumArray encode_audio(const RnntModel &model, const NumArray &features) {
  detail::check_features(model.config(), features);
  return detail::run_lstm_stack(model.params(), detail::encoder_prefixes(model.config()), features,
                                nullptr);
}

// ---------------------------------------------------------------------------
// Prediction network
// ---------------------------------------------------------------------------

inline NumArray embed_inputs(const RnntModel &model, const TokenSeq &targets) {
  const NumArray &emb = model.params().value(names::kEmbedding);
  NumArray x({targets.size() + 1, model.config().decoder_width});
  std::copy_n(emb.row(0).begin(), x.cols(), x.row(0).begin());
  for (size_t u = 0; u < targets.size(); ++u) {
    auto r = emb.row(static_cast<size_t>(targets[u]));
    std::copy(r.begin(), r.end(), x.row(u + 1).begin());
  }
  return x;
}

/// Prediction states g_0..g_U as a (U+1) x decoder_width array.
inline NumArray predict(const RnntModel &model, const TokenSeq &targets) {
  detail::check_targets(model.config(), targets);
  return detail::run_lstm_stack(model.params(), detail::decoder_prefixes(model.config()),
                                embed_inputs(model, targets), nullptr);
}

/// Incremental prediction network state for decoding.
struct DecoderState {
  std::vector<LstmState> layers;
  std::vector<double> output;
};

/// Feeds one embedding row (0 = start symbol) through the prediction network.
inline DecoderState decoder_step(const RnntModel &model, int input_row, const DecoderState *prev) {
  const ModelConfig &c = model.config();
  const NumArray &emb = model.params().value(names::kEmbedding);
  DecoderState next;
  auto row = emb.row(static_cast<size_t>(input_row));
  std::vector<double> x(row.begin(), row.end());
  for (size_t l = 0; l < c.decoder_layers; ++l) {
    const LstmWeights w = LstmWeights::from(model.params(), names::decoder_lstm(l));
    std::vector<double> zeros(c.decoder_width, 0.0);
    const auto &h = prev ? prev->layers[l].h : zeros;
    const auto &cs = prev ? prev->layers[l].c : zeros;
    next.layers.push_back(lstm_cell(x, h, cs, w));
    x = next.layers.back().h;
  }
  next.output = std::move(x);
  return next;
}

// ---------------------------------------------------------------------------
// Joint network
// ---------------------------------------------------------------------------

/// Weight views of the joint network plus the per-node forward/backward.
class JointNet {
 public:
  explicit JointNet(const RnntModel &model)
      : enc_(model.params().value(names::kJointEnc)),
        dec_(model.params().value(names::kJointDec)),
        bias_(model.params().value(names::kJointBias)),
        out_(model.params().value(names::kJointOut)),
        out_bias_(model.params().value(names::kJointOutBias)) {}

  size_t width() const { return bias_.size(); }
  size_t outputs() const { return out_bias_.size(); }

  /// W_enc f + b.
  std::vector<double> project_encoder(std::span<const double> f) const {
    if (f.size() != enc_.cols()) throw DimensionError("joint: encoder state width mismatch");
    std::vector<double> y(bias_.values());
    kernels::gemv_acc(enc_, f, y);
    return y;
  }

  /// W_dec g.
  std::vector<double> project_decoder(std::span<const double> g) const {
    if (g.size() != dec_.cols()) throw DimensionError("joint: prediction state width mismatch");
    std::vector<double> y(width(), 0.0);
    kernels::gemv_acc(dec_, g, y);
    return y;
  }

  /// hidden = tanh(fp + gp); logits = W_out hidden + b_out.
  void node_forward(std::span<const double> fp, std::span<const double> gp,
                    std::span<double> hidden, std::span<double> logits) const {
    for (size_t j = 0; j < hidden.size(); ++j) hidden[j] = std::tanh(fp[j] + gp[j]);
    std::copy(out_bias_.values().begin(), out_bias_.values().end(), logits.begin());
    kernels::gemv_acc(out_, hidden, logits);
  }

  /// Accumulates output-layer gradients for d(logits) and writes
  /// d(pre-activation) into d_pre.
  void node_backward(std::span<const double> hidden, std::span<const double> d_logits,
                     NumArray &g_out, NumArray &g_out_bias, std::span<double> d_pre) const {
    kernels::outer_acc(g_out, d_logits, hidden);
    kernels::axpy(1.0, d_logits, g_out_bias.data());
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    kernels::gemv_t_acc(out_, d_logits, d_pre);
    for (size_t j = 0; j < d_pre.size(); ++j) d_pre[j] *= 1.0 - hidden[j] * hidden[j];
  }

  const NumArray &enc() const { return enc_; }
  const NumArray &dec() const { return dec_; }

 private:
  const NumArray &enc_, &dec_, &bias_, &out_, &out_bias_;
};

/// Logits over V+1 outputs for one (f_t, g_u) pair.
inline NumArray joint(const RnntModel &model, std::span<const double> f, std::span<const double> g) {
  JointNet net(model);
  const auto fp = net.project_encoder(f);
  const auto gp = net.project_decoder(g);
  std::vector<double> hidden(net.width());
  NumArray logits({net.outputs()});
  net.node_forward(fp, gp, hidden, logits.data());
  return logits;
}

struct JointInputGrads {
  std::vector<double> f;
  std::vector<double> g;
};

/// Accumulates joint parameter gradients of <d_logits, joint(f, g)> and
/// returns the gradients with respect to f and g.
inline JointInputGrads joint_backward(RnntModel &model, std::span<const double> f,
                                      std::span<const double> g, std::span<const double> d_logits) {
  JointNet net(model);
  ParamTree &p = model.params();
  const auto fp = net.project_encoder(f);
  const auto gp = net.project_decoder(g);
  std::vector<double> hidden(net.width()), logits(net.outputs()), d_pre(net.width());
  net.node_forward(fp, gp, hidden, logits);
  net.node_backward(hidden, d_logits, p.grad(names::kJointOut), p.grad(names::kJointOutBias), d_pre);
  kernels::outer_acc(p.grad(names::kJointEnc), d_pre, f);
  kernels::outer_acc(p.grad(names::kJointDec), d_pre, g);
  kernels::axpy(1.0, d_pre, p.grad(names::kJointBias).data());
  JointInputGrads out{std::vector<double>(f.size(), 0.0), std::vector<double>(g.size(), 0.0)};
  kernels::gemv_t_acc(net.enc(), d_pre, out.f);
  kernels::gemv_t_acc(net.dec(), d_pre, out.g);
  return out;
}

// ---------------------------------------------------------------------------
// Alignment lattice
// ---------------------------------------------------------------------------

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Forward/backward tables over the T x (U+1) lattice. Node (t, u) means u
/// labels emitted and frame t current (0-based). Blank moves t -> t+1, a label
/// moves u -> u+1; the path ends with a blank out of (T-1, U).
struct LossLattice {
  size_t T = 0, U = 0;
  NumArray blank_logp;  // T x (U+1)
  NumArray label_logp;  // T x U, log P(y_{u+1} | t, u)
  NumArray alpha;       // T x (U+1)
  NumArray beta;        // T x (U+1)
  double total = 0.0;   // log P(y | x)

  /// log-probability of the state reached by leaving (t, u) with blank.
  double beta_after_blank(size_t t, size_t u) const {
    if (t + 1 < T) return beta.at(t + 1, u);
    return u == U ? 0.0 : kNegInf;
  }

  /// Posterior probability that an alignment passes through (t, u).
  double occupancy(size_t t, size_t u) const {
    return std::exp(alpha.at(t, u) + beta.at(t, u) - total);
  }
};

inline LossLattice compute_lattice(NumArray blank_logp, NumArray label_logp) {
  if (blank_logp.rank() != 2 || blank_logp.rows() == 0) {
    throw DimensionError("lattice: blank table must be T x (U+1) with T >= 1");
  }
  LossLattice L;
  L.T = blank_logp.rows();
  L.U = blank_logp.cols() - 1;
  if (label_logp.rank() != 2 || label_logp.rows() != L.T || label_logp.cols() != L.U) {
    throw DimensionError("lattice: label table must be T x U");
  }
  L.blank_logp = std::move(blank_logp);
  L.label_logp = std::move(label_logp);
  const size_t T = L.T, U = L.U;
  L.alpha = NumArray({T, U + 1});
  L.beta = NumArray({T, U + 1});
  for (size_t t = 0; t < T; ++t) {
    for (size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) {
        L.alpha.at(0, 0) = 0.0;
        continue;
      }
      const double from_blank = t > 0 ? L.alpha.at(t - 1, u) + L.blank_logp.at(t - 1, u) : kNegInf;
      const double from_label = u > 0 ? L.alpha.at(t, u - 1) + L.label_logp.at(t, u - 1) : kNegInf;
      L.alpha.at(t, u) = log_add(from_blank, from_label);
    }
  }
  for (size_t t = T; t-- > 0;) {
    for (size_t u = U + 1; u-- > 0;) {
      const double via_blank = L.blank_logp.at(t, u) + L.beta_after_blank(t, u);
      const double via_label = u < U ? L.label_logp.at(t, u) + L.beta.at(t, u + 1) : kNegInf;
      L.beta.at(t, u) = log_add(via_blank, via_label);
    }
  }
  L.total = L.alpha.at(T - 1, U) + L.blank_logp.at(T - 1, U);
  return L;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

namespace detail {

struct ForwardPass {
  NumArray enc_out;  // T x He
  NumArray dec_out;  // (U+1) x Hd
  std::vector<LstmLayerCache> enc_cache, dec_cache;
  NumArray hidden;     // T*(U+1) x J, node (t, u) at row t*(U+1)+u
  NumArray log_probs;  // T*(U+1) x (V+1)
};

inline ForwardPass forward(const RnntModel &model, const NumArray &features, const TokenSeq &targets,
                           bool keep_caches) {
  const ModelConfig &c = model.config();
  check_features(c, features);
  check_targets(c, targets);
  ForwardPass fw;
  fw.enc_out = run_lstm_stack(model.params(), encoder_prefixes(c), features,
                              keep_caches ? &fw.enc_cache : nullptr);
  fw.dec_out = run_lstm_stack(model.params(), decoder_prefixes(c), embed_inputs(model, targets),
                              keep_caches ? &fw.dec_cache : nullptr);
  const ParamTree &p = model.params();
  const size_t T = features.rows(), U1 = targets.size() + 1;
  const size_t J = c.joint_width, K = c.output_size();
  NumArray fp({T, J}), gp({U1, J});
  for (size_t t = 0; t < T; ++t) std::copy_n(p.value(names::kJointBias).values().begin(), J, fp.row(t).begin());
  kernels::gemm_nt_acc(fw.enc_out, p.value(names::kJointEnc), fp);
  kernels::gemm_nt_acc(fw.dec_out, p.value(names::kJointDec), gp);
  fw.hidden = NumArray({T * U1, J});
  fw.log_probs = NumArray({T * U1, K});
  const auto &out_bias = p.value(names::kJointOutBias).values();
  for (size_t t = 0; t < T; ++t) {
    for (size_t u = 0; u < U1; ++u) {
      auto h = fw.hidden.row(t * U1 + u);
      const auto f = fp.row(t), g = gp.row(u);
      for (size_t j = 0; j < J; ++j) h[j] = std::tanh(f[j] + g[j]);
      std::copy_n(out_bias.begin(), K, fw.log_probs.row(t * U1 + u).begin());
    }
  }
  kernels::gemm_nt_acc(fw.hidden, p.value(names::kJointOut), fw.log_probs);
  for (size_t n = 0; n < T * U1; ++n) log_softmax_into(fw.log_probs.row(n), fw.log_probs.row(n));
  return fw;
}

inline LossLattice lattice_from(const ForwardPass &fw, const TokenSeq &targets, size_t T) {
  const size_t U = targets.size();
  NumArray blank({T, U + 1}), label({T, U});
  for (size_t t = 0; t < T; ++t) {
    for (size_t u = 0; u <= U; ++u) {
      const auto lp = fw.log_probs.row(t * (U + 1) + u);
      blank.at(t, u) = lp[Vocab::kBlank];
      if (u < U) label.at(t, u) = lp[static_cast<size_t>(targets[u])];
    }
  }
  return compute_lattice(std::move(blank), std::move(label));
}

}  // namespace detail

/// Per-(t, u) blank and label log-probabilities for an utterance.
inline LossLattice rnnt_lattice(const RnntModel &model, const NumArray &features,
                                const TokenSeq &targets) {
  const auto fw = detail::forward(model, features, targets, false);
  return detail::lattice_from(fw, targets, features.rows());
}

/// -log P(targets | features) without touching gradients.
inline double rnnt_loss_value(const RnntModel &model, const NumArray &features,
                              const TokenSeq &targets) {
  return -rnnt_lattice(model, features, targets).total;
}

/// -log P(targets | features). Gradients of grad_scale * loss are accumulated
/// into model.params(). If lattice_out is given it receives the lattice.
inline double rnnt_loss(RnntModel &model, const NumArray &features, const TokenSeq &targets,
                        double grad_scale = 1.0, LossLattice *lattice_out = nullptr) {
  const ModelConfig &c = model.config();
  detail::ForwardPass fw = detail::forward(model, features, targets, true);
  const size_t T = features.rows(), U = targets.size(), U1 = U + 1;
  const size_t K = c.output_size();
  LossLattice L = detail::lattice_from(fw, targets, T);
  const double loss = -L.total;
  if (!std::isfinite(loss)) throw NumericError("rnnt_loss: non-finite loss");

  // Gradients of this call are built from zero and added to the existing
  // ones in a single pass, so repeated calls accumulate exactly.
  ParamTree &p = model.params();
  std::vector<NumArray> prior;
  prior.reserve(p.size());
  for (auto &[name, param] : p) prior.push_back(std::exchange(param.grad, NumArray(param.value.shape())));

  // d(-log P)/d logit_k = p_k * occ - gamma_k, gamma = transition posterior.
  NumArray d_logits({T * U1, K});
  for (size_t t = 0; t < T; ++t) {
    for (size_t u = 0; u < U1; ++u) {
      const size_t n = t * U1 + u;
      const double occ = L.occupancy(t, u);
      if (occ == 0.0) continue;
      const auto lp = fw.log_probs.row(n);
      auto d = d_logits.row(n);
      for (size_t k = 0; k < K; ++k) d[k] = std::exp(lp[k]) * occ;
      d[Vocab::kBlank] -=
          std::exp(L.alpha.at(t, u) + lp[Vocab::kBlank] + L.beta_after_blank(t, u) - L.total);
      if (u < U) {
        const auto y = static_cast<size_t>(targets[u]);
        d[y] -= std::exp(L.alpha.at(t, u) + lp[y] + L.beta.at(t, u + 1) - L.total);
      }
      for (double &v : d) v *= grad_scale;
    }
  }

  const size_t J = c.joint_width;
  kernels::gemm_tn_acc(d_logits, fw.hidden, p.grad(names::kJointOut));
  kernels::colsum_acc(d_logits, p.grad(names::kJointOutBias).data());
  NumArray d_pre({T * U1, J});
  kernels::gemm_nn_acc(d_logits, p.value(names::kJointOut), d_pre);
  NumArray d_fp({T, J}), d_gp({U1, J});
  for (size_t t = 0; t < T; ++t) {
    auto df = d_fp.row(t);
    for (size_t u = 0; u < U1; ++u) {
      const size_t n = t * U1 + u;
      auto dp = d_pre.row(n);
      const auto h = fw.hidden.row(n);
      auto dg = d_gp.row(u);
      for (size_t j = 0; j < J; ++j) {
        dp[j] *= 1.0 - h[j] * h[j];
        df[j] += dp[j];
        dg[j] += dp[j];
      }
    }
  }

  // Joint projections.
  kernels::gemm_tn_acc(d_fp, fw.enc_out, p.grad(names::kJointEnc));
  kernels::colsum_acc(d_fp, p.grad(names::kJointBias).data());
  kernels::gemm_tn_acc(d_gp, fw.dec_out, p.grad(names::kJointDec));
  NumArray d_enc_out({T, c.encoder_width});
  NumArray d_dec_out({U1, c.decoder_width});
  kernels::gemm_nn_acc(d_fp, p.value(names::kJointEnc), d_enc_out);
  kernels::gemm_nn_acc(d_gp, p.value(names::kJointDec), d_dec_out);

  detail::backprop_lstm_stack(p, detail::encoder_prefixes(c), fw.enc_cache, std::move(d_enc_out));
  NumArray d_emb_in =
      detail::backprop_lstm_stack(p, detail::decoder_prefixes(c), fw.dec_cache, std::move(d_dec_out));
  NumArray &g_emb = p.grad(names::kEmbedding);
  kernels::axpy(1.0, d_emb_in.row(0), g_emb.row(0));
  for (size_t u = 0; u < U; ++u) {
    kernels::axpy(1.0, d_emb_in.row(u + 1), g_emb.row(static_cast<size_t>(targets[u])));
  }

  size_t k = 0;
  for (auto &[name, param] : p) kernels::axpy(1.0, prior[k++].data(), param.grad.data());

  if (lattice_out) *lattice_out = std::move(L);
  return loss;
}

// ---------------------------------------------------------------------------
// Greedy decoding
// ---------------------------------------------------------------------------

/// At each frame emit the argmax label and advance the prediction network
/// until blank wins or max_emits_per_frame labels were emitted. Ties go to
/// the lowest index, so blank wins any tie.
inline TokenSeq greedy_decode(const RnntModel &model, const NumArray &features,
                              size_t max_emits_per_frame = 5) {
  if (max_emits_per_frame < 1) throw ArgumentError("greedy_decode: max_emits_per_frame must be >= 1");
  const NumArray enc = encode_audio(model, features);
  JointNet net(model);
  DecoderState state = decoder_step(model, 0, nullptr);
  std::vector<double> gp = net.project_decoder(state.output);
  std::vector<double> hidden(net.width()), logits(net.outputs());
  TokenSeq out;
  for (size_t t = 0; t < enc.rows(); ++t) {
    const auto fp = net.project_encoder(enc.row(t));
    for (size_t emitted = 0; emitted < max_emits_per_frame; ++emitted) {
      net.node_forward(fp, gp, hidden, logits);
      const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
      if (best == Vocab::kBlank) break;
      out.push_back(best);
      state = decoder_step(model, best, &state);
      gp = net.project_decoder(state.output);
    }
  }
  return out;
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_RNNT_MODEL_HPP
