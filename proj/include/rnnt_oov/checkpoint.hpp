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

// Checkpoint container, little-endian throughout:
//
//   "RNTCKPT1"
//   u64 n, n bytes of JSON metadata (config, vocab, step, info)
//   tensor block: model parameters
//   optional "EWC1" + tensor block (theta_old) + tensor block (fisher)
//   optional "ADM1" + tensor block (first moments) + tensor block (second moments)
//   "END1"
//
// A tensor block is u32 count, then per entry: u32 name length, name bytes,
// u8 component, u32 rank, rank x u64 dims, float64 values.

#ifndef RNNT_OOV_CHECKPOINT_HPP
#define RNNT_OOV_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rnnt_oov/errors.hpp"
#include "rnnt_oov/nn_core.hpp"
#include "rnnt_oov/regularization.hpp"
#include "rnnt_oov/rnnt_model.hpp"
#include "rnnt_oov/tokenizer.hpp"

namespace rnnt_oov {

/// Adam moment estimates and step count.
struct AdamMoments {
  uint64_t t = 0;
  ParamTree m;
  ParamTree v;
};

struct Checkpoint {
  ModelConfig config;
  Vocab vocab;
  ParamTree params;
  uint64_t step = 0;
  nlohmann::json info = nlohmann::json::object();
  std::optional<EwcState> ewc;
  std::optional<AdamMoments> adam;

  RnntModel model() const { return RnntModel(config, params); }
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'R', 'N', 'T', 'C', 'K', 'P', 'T', '1'};

class ByteWriter {
 public:
  template <typename T>
  void put(const T &v) {
    const char *p = reinterpret_cast<const char *>(&v);
    buf_.append(p, sizeof(T));
  }
  void bytes(const void *p, size_t n) { buf_.append(static_cast<const char *>(p), n); }
  void tag(std::string_view t) { buf_.append(t); }

  void tensors(const ParamTree &p) {
    put(static_cast<uint32_t>(p.size()));
    for (const auto &[name, param] : p) {
      put(static_cast<uint32_t>(name.size()));
      bytes(name.data(), name.size());
      put(static_cast<uint8_t>(param.component));
      put(static_cast<uint32_t>(param.value.rank()));
      for (size_t d : param.value.shape()) put(static_cast<uint64_t>(d));
      bytes(param.value.values().data(), param.value.size() * sizeof(double));
    }
  }

  const std::string &data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string what) : buf_(std::move(data)), what_(std::move(what)) {}

  void need(size_t n) const {
    if (buf_.size() - pos_ < n) throw FormatError(what_ + ": truncated checkpoint");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect(std::string_view tag) {
    if (str(tag.size()) != tag) throw FormatError(what_ + ": expected section " + std::string(tag));
  }
  bool at_end() const { return pos_ == buf_.size(); }

  ParamTree tensors() {
    ParamTree p;
    const auto count = get<uint32_t>();
    for (uint32_t k = 0; k < count; ++k) {
      const std::string name = str(get<uint32_t>());
      const auto comp = get<uint8_t>();
      if (comp > 2) throw FormatError(what_ + ": bad component tag for " + name);
      const auto rank = get<uint32_t>();
      if (rank > 8) throw FormatError(what_ + ": bad rank for " + name);
      std::vector<size_t> shape;
      size_t n = 1;
      for (uint32_t r = 0; r < rank; ++r) {
        shape.push_back(static_cast<size_t>(get<uint64_t>()));
        if (shape.back() > (size_t{1} << 32)) throw FormatError(what_ + ": bad dimension for " + name);
        n *= shape.back();
      }
      need(n * sizeof(double));
      std::vector<double> values(n);
      std::memcpy(values.data(), buf_.data() + pos_, n * sizeof(double));
      pos_ += n * sizeof(double);
      try {
        p.add(name, NumArray(std::move(shape), std::move(values)), static_cast<Component>(comp));
      } catch (const std::invalid_argument &e) {
        throw FormatError(what_ + ": " + e.what());
      }
    }
    return p;
  }

 private:
  std::string buf_;
  std::string what_;
  size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint &ck) {
  nlohmann::json meta;
  meta["config"] = ck.config.to_json();
  meta["vocab"] = ck.vocab.to_json();
  meta["step"] = ck.step;
  meta["info"] = ck.info;
  if (ck.ewc) meta["ewc"] = {{"lambda", ck.ewc->lambda}, {"scope", ck.ewc->scope.to_string()}};
  if (ck.adam) meta["adam"] = {{"t", ck.adam->t}};
  const std::string text = meta.dump();

  detail::ByteWriter w;
  w.bytes(detail::kCkptMagic, sizeof detail::kCkptMagic);
  w.put(static_cast<uint64_t>(text.size()));
  w.tag(text);
  w.tensors(ck.params);
  if (ck.ewc) {
    w.tag("EWC1");
    w.tensors(ck.ewc->theta_old);
    w.tensors(ck.ewc->fisher);
  }
  if (ck.adam) {
    w.tag("ADM1");
    w.tensors(ck.adam->m);
    w.tensors(ck.adam->v);
  }
  w.tag("END1");
  return w.data();
}

inline Checkpoint deserialize_checkpoint(std::string data, const std::string &what = "checkpoint") {
  detail::ByteReader r(std::move(data), what);
  r.expect(std::string_view(detail::kCkptMagic, sizeof detail::kCkptMagic));
  Checkpoint ck;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.str(static_cast<size_t>(r.get<uint64_t>())));
    ck.config = ModelConfig::from_json(meta.at("config"));
    ck.vocab = Vocab::from_json(meta.at("vocab"));
    ck.step = meta.at("step").get<uint64_t>();
    ck.info = meta.at("info");
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  } catch (const ConfigError &e) {
    throw FormatError(what + ": " + e.what());
  }
  if (ck.vocab.size() != ck.config.output_size()) throw FormatError(what + ": vocab and model sizes differ");
  ck.params = r.tensors();
  if (!ck.params.same_layout(RnntModel::layout(ck.config))) {
    throw FormatError(what + ": parameters do not match the model config");
  }
  try {
    if (meta.contains("ewc")) {
      r.expect("EWC1");
      ParamTree theta = r.tensors();
      ParamTree fisher = r.tensors();
      ck.ewc = EwcState(std::move(theta), std::move(fisher), meta["ewc"].at("lambda").get<double>(),
                        ComponentSet::parse(meta["ewc"].at("scope").get<std::string>()));
    }
    if (meta.contains("adam")) {
      r.expect("ADM1");
      AdamMoments a;
      a.t = meta["adam"].at("t").get<uint64_t>();
      a.m = r.tensors();
      a.v = r.tensors();
      if (!a.m.same_layout(ck.params) || !a.v.same_layout(ck.params)) {
        throw FormatError(what + ": optimizer state does not match parameters");
      }
      ck.adam = std::move(a);
    }
  } catch (const nlohmann::json::exception &e) {
    throw FormatError(what + ": bad metadata: " + e.what());
  } catch (const std::invalid_argument &e) {
    throw FormatError(what + ": " + e.what());
  }
  r.expect("END1");
  if (!r.at_end()) throw FormatError(what + ": trailing bytes");
  return ck;
}

/// Writes via a temporary file and rename.
inline void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) {
  const std::string bytes = serialize_checkpoint(ck);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

}  // namespace rnnt_oov

#endif  // RNNT_OOV_CHECKPOINT_HPP
