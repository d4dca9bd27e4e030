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

// Numeric substrate: dense arrays, parameter trees, seeded randomness and the
// handful of differentiable kernels (matmul, log-softmax, LSTM cell) the
// transducer needs. Backward passes are hand written; every one of them is
// covered by a finite-difference test.

#ifndef RNNT_OOV_NN_CORE_HPP
#define RNNT_OOV_NN_CORE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "rnnt_oov/errors.hpp"

namespace rnnt_oov {

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer; used to derive independent seeds from (seed, index).
inline constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  return mix64(mix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 1));
}

/// Maps 64 random bits to a double in [0, 1).
inline double unit_interval(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Seeded generator. Distribution code is written out here rather than taken
/// from <random>, whose distributions are implementation-defined; this keeps
/// every derived value reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }
  double uniform() { return unit_interval(engine_()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Unbiased integer in [0, n).
  size_t index(size_t n) {
    if (n == 0) throw ArgumentError("Rng::index: empty range");
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = std::numeric_limits<uint64_t>::max() -
                           std::numeric_limits<uint64_t>::max() % bound;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<size_t>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// NumArray
// ---------------------------------------------------------------------------

/// Dense row-major array of doubles.
class NumArray {
 public:
  NumArray() = default;

  explicit NumArray(std::vector<size_t> shape)
      : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

  NumArray(std::vector<size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
      throw DimensionError("NumArray: shape does not match data length");
    }
  }

  /// Rank-2 array from nested rows.
  static NumArray matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const size_t r = rows.size();
    const size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto &row : rows) {
      if (row.size() != c) throw DimensionError("NumArray::matrix: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return NumArray({r, c}, std::move(data));
  }

  static NumArray vector(std::vector<double> values) {
    const size_t n = values.size();
    return NumArray({n}, std::move(values));
  }

  const std::vector<size_t> &shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  size_t rows() const { return require_rank2().first; }
  size_t cols() const { return require_rank2().second; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double> &values() { return data_; }
  const std::vector<double> &values() const { return data_; }

  double &operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double &at(size_t r, size_t c) { return data_[r * shape_[1] + c]; }
  double at(size_t r, size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(size_t r) {
    const size_t c = cols();
    return std::span<double>(data_).subspan(r * c, c);
  }
  std::span<const double> row(size_t r) const {
    const size_t c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const NumArray &, const NumArray &) = default;

 private:
  static size_t element_count(const std::vector<size_t> &shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }

  std::pair<size_t, size_t> require_rank2() const {
    if (shape_.size() != 2) throw DimensionError("NumArray: expected rank-2 array");
    return {shape_[0], shape_[1]};
  }

  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// ParamTree
// ---------------------------------------------------------------------------

enum class Component { encoder, decoder, joint };

inline constexpr std::string_view component_name(Component c) {
  switch (c) {
    case Component::encoder: return "encoder";
    case Component::decoder: return "decoder";
    case Component::joint: return "joint";
  }
  return "?";
}

inline Component parse_component(std::string_view name) {
  if (name == "encoder") return Component::encoder;
  if (name == "decoder") return Component::decoder;
  if (name == "joint") return Component::joint;
  throw ArgumentError("unknown component '" + std::string(name) + "'");
}

inline constexpr std::array<Component, 3> kAllComponents = {
    Component::encoder, Component::decoder, Component::joint};

/// Small set of component tags, stored as a bitmask.
class ComponentSet {
 public:
  constexpr ComponentSet() = default;
  constexpr ComponentSet(std::initializer_list<Component> cs) {
    for (Component c : cs) insert(c);
  }
  static constexpr ComponentSet all() {
    return {Component::encoder, Component::decoder, Component::joint};
  }

  constexpr void insert(Component c) { bits_ |= bit(c); }
  constexpr bool contains(Component c) const { return (bits_ & bit(c)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr friend bool operator==(ComponentSet, ComponentSet) = default;

  /// Comma-separated names in encoder, decoder, joint order ("" when empty).
  std::string to_string() const {
    std::string out;
    for (Component c : kAllComponents) {
      if (!contains(c)) continue;
      if (!out.empty()) out += ',';
      out += component_name(c);
    }
    return out;
  }

  /// Parses "encoder,joint"; "" and "none" give the empty set, "all" the full one.
  static ComponentSet parse(std::string_view text) {
    ComponentSet set;
    if (text.empty() || text == "none") return set;
    if (text == "all") return all();
    size_t start = 0;
    while (start <= text.size()) {
      size_t end = text.find(',', start);
      if (end == std::string_view::npos) end = text.size();
      set.insert(parse_component(text.substr(start, end - start)));
      start = end + 1;
    }
    return set;
  }

 private:
  static constexpr unsigned bit(Component c) { return 1u << static_cast<unsigned>(c); }
  unsigned bits_ = 0;
};

struct Parameter {
  NumArray value;
  NumArray grad;
  Component component = Component::encoder;
};

/// Named parameters with gradients, iterated in lexicographic name order.
class ParamTree {
 public:
  using Map = std::map<std::string, Parameter>;

  Parameter &add(const std::string &name, std::vector<size_t> shape, Component component) {
    if (name.empty()) throw ArgumentError("ParamTree: empty parameter name");
    auto [it, inserted] =
        entries_.try_emplace(name, Parameter{NumArray(shape), NumArray(shape), component});
    if (!inserted) throw ArgumentError("ParamTree: duplicate parameter '" + name + "'");
    return it->second;
  }

  Parameter &add(const std::string &name, NumArray value, Component component) {
    auto &p = add(name, value.shape(), component);
    p.value = std::move(value);
    return p;
  }

  bool contains(const std::string &name) const { return entries_.count(name) != 0; }

  Parameter &at(const std::string &name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArgumentError("ParamTree: no parameter '" + name + "'");
    return it->second;
  }
  const Parameter &at(const std::string &name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ArgumentError("ParamTree: no parameter '" + name + "'");
    return it->second;
  }

  NumArray &value(const std::string &name) { return at(name).value; }
  const NumArray &value(const std::string &name) const { return at(name).value; }
  NumArray &grad(const std::string &name) { return at(name).grad; }
  const NumArray &grad(const std::string &name) const { return at(name).grad; }

  Map::iterator begin() { return entries_.begin(); }
  Map::iterator end() { return entries_.end(); }
  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

  size_t size() const { return entries_.size(); }

  /// Total scalar count, optionally restricted to a set of components.
  size_t scalar_count(ComponentSet scope = ComponentSet::all()) const {
    size_t n = 0;
    for (const auto &[name, p] : entries_) {
      if (scope.contains(p.component)) n += p.value.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto &[name, p] : entries_) p.grad.fill(0.0);
  }

  /// Same names, shapes and component tags.
  bool same_layout(const ParamTree &other) const {
    if (entries_.size() != other.entries_.size()) return false;
    auto a = entries_.begin();
    auto b = other.entries_.begin();
    for (; a != entries_.end(); ++a, ++b) {
      if (a->first != b->first || a->second.component != b->second.component ||
          a->second.value.shape() != b->second.value.shape()) {
        return false;
      }
    }
    return true;
  }

 private:
  Map entries_;
};

/// Uniform init in [-k, k], k = 1/sqrt(fan_in), in parameter-name order.
inline void init_uniform(ParamTree &params, uint64_t seed,
                         const std::function<size_t(const std::string &, const NumArray &)> &fan_in) {
  Rng rng(seed);
  for (auto &[name, p] : params) {
    const double k = 1.0 / std::sqrt(static_cast<double>(std::max<size_t>(1, fan_in(name, p.value))));
    for (double &v : p.value.values()) v = rng.uniform(-k, k);
  }
}

// ---------------------------------------------------------------------------
// Kernels. Raw span versions are what the model uses in its hot loops.
// ---------------------------------------------------------------------------
namespace kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::VectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::VectorXd>;

inline ConstMatrixView view(const NumArray &a) {
  return ConstMatrixView(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                         static_cast<Eigen::Index>(a.cols()));
}
inline MatrixView view(NumArray &a) {
  return MatrixView(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                    static_cast<Eigen::Index>(a.cols()));
}
inline ConstVectorView view(std::span<const double> v) {
  return ConstVectorView(v.data(), static_cast<Eigen::Index>(v.size()));
}
inline VectorView view(std::span<double> v) {
  return VectorView(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// y += W x, W is rows x cols.
inline void gemv_acc(const NumArray &w, std::span<const double> x, std::span<double> y) {
  view(y).noalias() += view(w) * view(x);
}

/// y += W^T v.
inline void gemv_t_acc(const NumArray &w, std::span<const double> v, std::span<double> y) {
  view(y).noalias() += view(w).transpose() * view(v);
}

/// G += a b^T.
inline void outer_acc(NumArray &g, std::span<const double> a, std::span<const double> b) {
  view(g).noalias() += view(a) * view(b).transpose();
}

/// C += A B^T.
inline void gemm_nt_acc(const NumArray &a, const NumArray &b, NumArray &c) {
  view(c).noalias() += view(a) * view(b).transpose();
}

/// C += A^T B.
inline void gemm_tn_acc(const NumArray &a, const NumArray &b, NumArray &c) {
  view(c).noalias() += view(a).transpose() * view(b);
}

/// C += A B.
inline void gemm_nn_acc(const NumArray &a, const NumArray &b, NumArray &c) {
  view(c).noalias() += view(a) * view(b);
}

/// y += column sums of A.
inline void colsum_acc(const NumArray &a, std::span<double> y) {
  view(y).noalias() += view(a).colwise().sum().transpose();
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

inline NumArray matmul(const NumArray &a, const NumArray &b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be rank 2");
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  NumArray out({a.rows(), b.cols()});
  kernels::gemm_nn_acc(a, b, out);
  return out;
}

struct MatmulGrads {
  NumArray a;
  NumArray b;
};

/// Gradients of <grad_out, a*b> with respect to a and b.
inline MatmulGrads matmul_backward(const NumArray &a, const NumArray &b, const NumArray &grad_out) {
  if (grad_out.rank() != 2 || grad_out.rows() != a.rows() || grad_out.cols() != b.cols()) {
    throw DimensionError("matmul_backward: grad_out shape mismatch");
  }
  MatmulGrads g{NumArray(a.shape()), NumArray(b.shape())};
  kernels::gemm_nt_acc(grad_out, b, g.a);
  kernels::gemm_tn_acc(a, grad_out, g.b);
  return g;
}

/// log(exp(a) + exp(b)), exact at -inf.
inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("logsumexp: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logsumexp(const NumArray &v) {
  if (v.rank() != 1) throw DimensionError("logsumexp: expected rank-1 input");
  return logsumexp(v.data());
}

/// Writes v - logsumexp(v) into out (out may alias v).
inline void log_softmax_into(std::span<const double> v, std::span<double> out) {
  const double lse = logsumexp(v);
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
}

inline NumArray log_softmax(const NumArray &v) {
  if (v.rank() != 1) throw DimensionError("log_softmax: expected rank-1 input");
  NumArray out(v.shape());
  log_softmax_into(v.data(), out.data());
  return out;
}

/// Given y = log_softmax(v) and dL/dy, returns dL/dv = g - softmax(v) * sum(g).
inline NumArray log_softmax_backward(const NumArray &output, const NumArray &grad_out) {
  if (output.shape() != grad_out.shape()) throw DimensionError("log_softmax_backward: shape mismatch");
  const double total = std::accumulate(grad_out.values().begin(), grad_out.values().end(), 0.0);
  NumArray g(output.shape());
  for (size_t i = 0; i < output.size(); ++i) g[i] = grad_out[i] - std::exp(output[i]) * total;
  return g;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are stacked [input, forget, candidate, output].
// ---------------------------------------------------------------------------

struct LstmWeights {
  const NumArray &w_x;   // 4H x In
  const NumArray &w_h;   // 4H x H
  const NumArray &bias;  // 4H

  size_t hidden() const { return w_h.cols(); }
  size_t input() const { return w_x.cols(); }

  static LstmWeights from(const ParamTree &params, const std::string &prefix) {
    return {params.value(prefix + ".w_x"), params.value(prefix + ".w_h"),
            params.value(prefix + ".bias")};
  }
};

struct LstmGrads {
  NumArray &w_x;
  NumArray &w_h;
  NumArray &bias;

  static LstmGrads from(ParamTree &params, const std::string &prefix) {
    return {params.grad(prefix + ".w_x"), params.grad(prefix + ".w_h"),
            params.grad(prefix + ".bias")};
  }
};

/// Everything the backward pass needs from one forward step.
struct LstmStep {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> gates;  // post-activation, 4H
  std::vector<double> c, tanh_c;
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

inline LstmState lstm_cell(std::span<const double> x, std::span<const double> h,
                           std::span<const double> c, const LstmWeights &w,
                           LstmStep *cache = nullptr) {
  const size_t H = w.hidden();
  if (w.w_x.rows() != 4 * H || w.w_h.rows() != 4 * H || w.bias.size() != 4 * H) {
    throw DimensionError("lstm_cell: inconsistent weight shapes");
  }
  if (x.size() != w.input() || h.size() != H || c.size() != H) {
    throw DimensionError("lstm_cell: input/state width mismatch");
  }
  std::vector<double> z(w.bias.values());
  kernels::gemv_acc(w.w_x, x, z);
  kernels::gemv_acc(w.w_h, h, z);
  for (size_t j = 0; j < H; ++j) {
    z[j] = kernels::sigmoid(z[j]);
    z[H + j] = kernels::sigmoid(z[H + j]);
    z[2 * H + j] = std::tanh(z[2 * H + j]);
    z[3 * H + j] = kernels::sigmoid(z[3 * H + j]);
  }
  LstmState out{std::vector<double>(H), std::vector<double>(H)};
  std::vector<double> tanh_c(H);
  for (size_t j = 0; j < H; ++j) {
    out.c[j] = z[H + j] * c[j] + z[j] * z[2 * H + j];
    tanh_c[j] = std::tanh(out.c[j]);
    out.h[j] = z[3 * H + j] * tanh_c[j];
  }
  if (cache != nullptr) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h.begin(), h.end());
    cache->c_prev.assign(c.begin(), c.end());
    cache->gates = std::move(z);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

inline LstmState lstm_cell(const NumArray &x, const NumArray &h, const NumArray &c,
                           const ParamTree &params, const std::string &prefix) {
  return lstm_cell(x.data(), h.data(), c.data(), LstmWeights::from(params, prefix));
}

/// Backpropagates dL/dh' and dL/dc' through one step. Weight gradients are
/// accumulated; dx, dh_prev and dc_prev are overwritten.
inline void lstm_cell_backward(const LstmStep &step, const LstmWeights &w, LstmGrads &grads,
                               std::span<const double> dh, std::span<const double> dc,
                               std::span<double> dx, std::span<double> dh_prev,
                               std::span<double> dc_prev) {
  const size_t H = w.hidden();
  const auto &g = step.gates;
  std::vector<double> dz(4 * H);
  for (size_t j = 0; j < H; ++j) {
    const double i = g[j], f = g[H + j], cand = g[2 * H + j], o = g[3 * H + j];
    const double tc = step.tanh_c[j];
    const double dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
    dz[j] = dct * cand * i * (1.0 - i);
    dz[H + j] = dct * step.c_prev[j] * f * (1.0 - f);
    dz[2 * H + j] = dct * i * (1.0 - cand * cand);
    dz[3 * H + j] = dh[j] * tc * o * (1.0 - o);
    dc_prev[j] = dct * f;
  }
  kernels::outer_acc(grads.w_x, dz, step.x);
  kernels::outer_acc(grads.w_h, dz, step.h_prev);
  kernels::axpy(1.0, dz, grads.bias.data());
  std::fill(dx.begin(), dx.end(), 0.0);
  std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
  kernels::gemv_t_acc(w.w_x, dz, dx);
  kernels::gemv_t_acc(w.w_h, dz, dh_prev);
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_NN_CORE_HPP
