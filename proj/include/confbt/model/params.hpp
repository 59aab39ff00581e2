// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "confbt/model/config.hpp"
#include "confbt/numerics/autograd.hpp"
#include "confbt/numerics/rng.hpp"
#include "confbt/numerics/tensor.hpp"

namespace confbt {

struct NormSlots {
  std::size_t gain, bias;
};
struct AttentionSlots {
  std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
};
struct FeedForwardSlots {
  std::size_t w1, b1, w2, b2;
};
struct EncoderLayerSlots {
  NormSlots self_norm;
  AttentionSlots self_attn;
  NormSlots ffn_norm;
  FeedForwardSlots ffn;
};
struct DecoderLayerSlots {
  NormSlots self_norm;
  AttentionSlots self_attn;
  NormSlots cross_norm;
  AttentionSlots cross_attn;
  NormSlots ffn_norm;
  FeedForwardSlots ffn;
};

/// Index of every parameter tensor; the order is a pure function of the config.
struct ParamLayout {
  std::size_t src_embedding = 0;
  std::size_t tgt_embedding = 0;
  std::vector<EncoderLayerSlots> encoder;
  NormSlots encoder_norm{};
  std::vector<DecoderLayerSlots> decoder;
  NormSlots decoder_norm{};
  std::size_t out_weight = 0;  // unused when the target embedding is shared
  std::size_t out_bias = 0;

  std::vector<std::string> names;
  std::vector<Shape> shapes;

  static ParamLayout Build(const ModelConfig& c) {
    ParamLayout l;
    const std::size_t d = c.d_model, f = c.ff_size;
    auto add = [&l](std::string name, Shape shape) {
      l.names.push_back(std::move(name));
      l.shapes.push_back(std::move(shape));
      return l.names.size() - 1;
    };
    auto norm = [&](const std::string& p) {
      return NormSlots{add(p + ".gain", {1, d}), add(p + ".bias", {1, d})};
    };
    auto attn = [&](const std::string& p) {
      AttentionSlots a{};
      a.wq = add(p + ".wq", {d, d});
      a.bq = add(p + ".bq", {1, d});
      a.wk = add(p + ".wk", {d, d});
      a.bk = add(p + ".bk", {1, d});
      a.wv = add(p + ".wv", {d, d});
      a.bv = add(p + ".bv", {1, d});
      a.wo = add(p + ".wo", {d, d});
      a.bo = add(p + ".bo", {1, d});
      return a;
    };
    auto ffn = [&](const std::string& p) {
      return FeedForwardSlots{add(p + ".w1", {d, f}), add(p + ".b1", {1, f}),
                              add(p + ".w2", {f, d}), add(p + ".b2", {1, d})};
    };
    l.src_embedding = add("src_embedding", {c.src_vocab, d});
    l.tgt_embedding = add("tgt_embedding", {c.tgt_vocab, d});
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = "encoder." + std::to_string(i);
      EncoderLayerSlots s{};
      s.self_norm = norm(p + ".self_norm");
      s.self_attn = attn(p + ".self_attn");
      s.ffn_norm = norm(p + ".ffn_norm");
      s.ffn = ffn(p + ".ffn");
      l.encoder.push_back(s);
    }
    l.encoder_norm = norm("encoder.norm");
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = "decoder." + std::to_string(i);
      DecoderLayerSlots s{};
      s.self_norm = norm(p + ".self_norm");
      s.self_attn = attn(p + ".self_attn");
      s.cross_norm = norm(p + ".cross_norm");
      s.cross_attn = attn(p + ".cross_attn");
      s.ffn_norm = norm(p + ".ffn_norm");
      s.ffn = ffn(p + ".ffn");
      l.decoder.push_back(s);
    }
    l.decoder_norm = norm("decoder.norm");
    if (!c.share_target_embedding) l.out_weight = add("out_weight", {d, c.tgt_vocab});
    l.out_bias = add("out_bias", {1, c.tgt_vocab});
    return l;
  }
};

/// All trainable tensors of one translation direction.
struct TransformerParams {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t size() const { return tensors.size(); }
  std::size_t NumScalars() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }
  bool AllFinite() const {
    for (const auto& t : tensors)
      if (!t.AllFinite()) return false;
    return true;
  }

  /// Xavier-uniform matrices, N(0, d^-1/2) embeddings, unit norm gains, zero biases.
  static TransformerParams Init(const ModelConfig& config, std::uint64_t seed) {
    config.Validate();
    const ParamLayout layout = ParamLayout::Build(config);
    TransformerParams p;
    p.names = layout.names;
    RngStream root(seed, 0x9a7a);
    for (std::size_t k = 0; k < layout.names.size(); ++k) {
      const std::string& name = layout.names[k];
      const Shape& shape = layout.shapes[k];
      Tensor t(shape);
      RngStream rng = root.Substream(k);
      auto ends_with = [&name](const std::string& suffix) {
        return name.size() >= suffix.size() &&
               name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
      };
      if (ends_with("embedding")) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(config.d_model));
        for (auto& v : t.vec()) v = sd * rng.Normal();
      } else if (ends_with(".gain")) {
        for (auto& v : t.vec()) v = 1.0;
      } else if (shape[0] > 1) {
        const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
        for (auto& v : t.vec()) v = (2.0 * rng.Uniform() - 1.0) * limit;
      }
      p.tensors.push_back(std::move(t));
    }
    return p;
  }

  friend bool operator==(const TransformerParams& a, const TransformerParams& b) {
    return a.names == b.names && a.tensors == b.tensors;
  }
};

/// Binds parameter tensors to a tape on first use.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const TransformerParams& params)
      : tape_(tape), params_(params), vars_(params.size()), bound_(params.size(), false) {}

  Var operator[](std::size_t slot) {
    if (!bound_[slot]) {
      vars_[slot] = tape_.Param(params_.tensors[slot]);
      bound_[slot] = true;
    }
    return vars_[slot];
  }

  Tape& tape() { return tape_; }

  /// Gradients for every parameter after Backward(); zeros for unreached ones.
  std::vector<Tensor> Gradients() const {
    std::vector<Tensor> g;
    g.reserve(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const Tensor* gk = bound_[k] ? tape_.grad(vars_[k]) : nullptr;
      g.push_back(gk ? *gk : Tensor(params_.tensors[k].shape()));
    }
    return g;
  }

  /// Adds gradients into `acc` (which must already be shaped like params).
  void AccumulateInto(std::vector<Tensor>& acc, double scale = 1.0) const {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      if (!bound_[k]) continue;
      const Tensor* gk = tape_.grad(vars_[k]);
      if (!gk) continue;
      auto dst = acc[k].data();
      auto src = gk->data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
    }
  }

 private:
  Tape& tape_;
  const TransformerParams& params_;
  std::vector<Var> vars_;
  std::vector<bool> bound_;
};

}  // namespace confbt
