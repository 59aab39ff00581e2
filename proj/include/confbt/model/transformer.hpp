// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "confbt/data/vocab.hpp"
#include "confbt/model/config.hpp"
#include "confbt/model/params.hpp"
#include "confbt/numerics/autograd.hpp"
#include "confbt/numerics/rng.hpp"

namespace confbt {

/// Per-source-position weights in [0,1] (one entry per encoder position,
/// i.e. source tokens followed by </s>).
using ConfidenceVector = std::vector<double>;

/// Scaled dot-product attention with optional confidence modulation:
///   (softmax(Q K^T / sqrt(d)) (.) c) V
/// c multiplies every row of the weight matrix elementwise and the result is
/// not renormalized unless `renormalize` is set.
inline Var Attention(Var q, Var k, Var v, const ConfidenceVector* c = nullptr,
                     bool causal = false, bool renormalize = false) {
  const std::size_t keys = k.value().rows();
  if (v.value().rows() != keys) {
    Fail(ErrorKind::kDimension, "attention: ", keys, " keys but ", v.value().rows(), " values");
  }
  if (c && c->size() != keys) {
    Fail(ErrorKind::kDimension, "attention: confidence vector of length ", c->size(),
         " for ", keys, " key positions");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
  Var weights = ops::SoftmaxRows(ops::Scale(ops::MatmulNT(q, k), scale), causal);
  if (c) {
    weights = ops::ScaleCols(weights, *c);
    if (renormalize) weights = ops::NormalizeRows(weights);
  }
  return ops::Matmul(weights, v);
}

/// Attention-weight matrix only (no value mixing); useful for inspection.
inline Tensor AttentionWeights(const Tensor& q, const Tensor& k, const ConfidenceVector* c = nullptr) {
  Tape tape(false);
  Var qv = tape.Constant(q), kv = tape.Constant(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var w = ops::SoftmaxRows(ops::Scale(ops::MatmulNT(qv, kv), scale));
  if (c) w = ops::ScaleCols(w, *c);
  return w.value();
}

/// Options for one forward computation.
struct ForwardOptions {
  bool training = false;
  /// Overrides the config dropout rate when set (used by MC-dropout passes).
  std::optional<double> dropout;
  const ConfidenceVector* confidence = nullptr;
};

/// Pre-norm transformer encoder-decoder over a TransformerParams instance.
class Transformer {
 public:
  explicit Transformer(ModelConfig config)
      : config_(std::move(config)), layout_(ParamLayout::Build(config_)) {
    config_.Validate();
  }

  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }

  void CheckSource(std::span<const int> src) const {
    CheckTokens(src, config_.src_vocab, "source");
  }
  void CheckTarget(std::span<const int> tgt) const {
    CheckTokens(tgt, config_.tgt_vocab, "target");
  }

  /// Encoder output for `src` (</s> appended internally), rows = |src| + 1.
  Var Encode(ParamBinder& p, std::span<const int> src, RngStream& rng,
             const ForwardOptions& opt) const {
    CheckSource(src);
    Tape& tape = p.tape();
    const double rate = DropoutRate(opt);
    TokenIds ids(src.begin(), src.end());
    ids.push_back(kEosId);
    const ConfidenceVector* c = opt.confidence;
    if (c && c->size() != ids.size()) {
      Fail(ErrorKind::kDimension, "confidence vector of length ", c->size(), " for ",
           ids.size(), " source positions");
    }
    const ConfidenceVector* self_c =
        config_.confidence_sites != ConfidenceSites::kCross ? c : nullptr;
    Var x = Embed(p, layout_.src_embedding, ids);
    x = ops::Dropout(x, rate, rng, opt.training);
    for (const auto& layer : layout_.encoder) {
      Var h = Norm(p, x, layer.self_norm);
      h = MultiHead(p, layer.self_attn, h, h, self_c, false);
      x = ops::Add(x, ops::Dropout(h, rate, rng, opt.training));
      h = Norm(p, x, layer.ffn_norm);
      h = FeedForward(p, layer.ffn, h);
      x = ops::Add(x, ops::Dropout(h, rate, rng, opt.training));
    }
    (void)tape;
    return Norm(p, x, layout_.encoder_norm);
  }

  /// Log-probabilities (rows = |tgt_in|, cols = target vocab) for decoder
  /// input `tgt_in`, which must start with <s>.
  Var Decode(ParamBinder& p, Var memory, std::span<const int> tgt_in, RngStream& rng,
             const ForwardOptions& opt) const {
    CheckTarget(tgt_in);
    const double rate = DropoutRate(opt);
    const ConfidenceVector* c = opt.confidence;
    const ConfidenceVector* cross_c =
        config_.confidence_sites != ConfidenceSites::kEncoderSelf ? c : nullptr;
    if (cross_c && cross_c->size() != memory.value().rows()) {
      Fail(ErrorKind::kDimension, "confidence vector of length ", cross_c->size(), " for ",
           memory.value().rows(), " source positions");
    }
    Var x = Embed(p, layout_.tgt_embedding, tgt_in);
    x = ops::Dropout(x, rate, rng, opt.training);
    for (const auto& layer : layout_.decoder) {
      Var h = Norm(p, x, layer.self_norm);
      h = MultiHead(p, layer.self_attn, h, h, nullptr, true);
      x = ops::Add(x, ops::Dropout(h, rate, rng, opt.training));
      h = Norm(p, x, layer.cross_norm);
      h = MultiHead(p, layer.cross_attn, h, memory, cross_c, false);
      x = ops::Add(x, ops::Dropout(h, rate, rng, opt.training));
      h = Norm(p, x, layer.ffn_norm);
      h = FeedForward(p, layer.ffn, h);
      x = ops::Add(x, ops::Dropout(h, rate, rng, opt.training));
    }
    x = Norm(p, x, layout_.decoder_norm);
    Var logits = config_.share_target_embedding ? ops::MatmulNT(x, p[layout_.tgt_embedding])
                                                : ops::Matmul(x, p[layout_.out_weight]);
    logits = ops::AddRowBroadcast(logits, p[layout_.out_bias]);
    return ops::LogSoftmaxRows(logits);
  }

  /// Teacher-forced log-probability matrix for the full target: rows are the
  /// |tgt| + 1 prediction positions (tgt followed by </s>).
  Var ForwardMatrix(ParamBinder& p, std::span<const int> src, std::span<const int> tgt,
                    RngStream& rng, const ForwardOptions& opt) const {
    if (src.empty() || tgt.empty()) {
      Fail(ErrorKind::kLength, "forward: source and target must be nonempty");
    }
    CheckLength(src.size() + 1, "source");
    CheckLength(tgt.size() + 1, "target");
    Var memory = Encode(p, src, rng, opt);
    TokenIds tgt_in;
    tgt_in.reserve(tgt.size() + 1);
    tgt_in.push_back(kBosId);
    tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
    return Decode(p, memory, tgt_in, rng, opt);
  }

  /// log P(token_j | prefix, source) for every gold token followed by </s>.
  std::vector<double> ForwardLogprobs(const TransformerParams& params, std::span<const int> src,
                                      std::span<const int> tgt, RngStream& rng,
                                      const ForwardOptions& opt) const {
    Tape tape(false);
    ParamBinder p(tape, params);
    Var lp = ForwardMatrix(p, src, tgt, rng, opt);
    return GoldLogprobs(lp.value(), tgt);
  }

  static std::vector<double> GoldLogprobs(const Tensor& lp, std::span<const int> tgt) {
    std::vector<double> out(tgt.size() + 1);
    for (std::size_t j = 0; j < tgt.size(); ++j)
      out[j] = lp(j, static_cast<std::size_t>(tgt[j]));
    out[tgt.size()] = lp(tgt.size(), static_cast<std::size_t>(kEosId));
    return out;
  }

  void CheckLength(std::size_t n, const char* side) const {
    if (n > config_.max_len) {
      Fail(ErrorKind::kLength, side, " sequence of ", n, " positions exceeds max_len ",
           config_.max_len);
    }
  }

 private:
  double DropoutRate(const ForwardOptions& opt) const {
    return opt.dropout ? *opt.dropout : config_.dropout;
  }

  static void CheckTokens(std::span<const int> ids, std::size_t vocab, const char* side) {
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
        Fail(ErrorKind::kVocab, side, " token id ", id, " outside vocabulary of ", vocab);
      }
    }
  }

  Var Embed(ParamBinder& p, std::size_t table, std::span<const int> ids) const {
    Tape& tape = p.tape();
    const std::size_t d = config_.d_model;
    CheckLength(ids.size(), "input");
    Var e = ops::Scale(ops::GatherRows(p[table], ids), std::sqrt(static_cast<double>(d)));
    return ops::Add(e, tape.Constant(PositionalEncoding(ids.size(), d)));
  }

  static Tensor PositionalEncoding(std::size_t n, std::size_t d) {
    Tensor pe = Tensor::Zeros(n, d);
    for (std::size_t pos = 0; pos < n; ++pos) {
      for (std::size_t i = 0; i < d; i += 2) {
        const double angle =
            static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
        pe(pos, i) = std::sin(angle);
        if (i + 1 < d) pe(pos, i + 1) = std::cos(angle);
      }
    }
    return pe;
  }

  Var Norm(ParamBinder& p, Var x, const NormSlots& s) const {
    return ops::LayerNorm(x, p[s.gain], p[s.bias]);
  }

  Var FeedForward(ParamBinder& p, const FeedForwardSlots& s, Var x) const {
    Var h = ops::Relu(ops::AddRowBroadcast(ops::Matmul(x, p[s.w1]), p[s.b1]));
    return ops::AddRowBroadcast(ops::Matmul(h, p[s.w2]), p[s.b2]);
  }

  Var MultiHead(ParamBinder& p, const AttentionSlots& s, Var query_in, Var kv_in,
                const ConfidenceVector* c, bool causal) const {
    Var q = ops::AddRowBroadcast(ops::Matmul(query_in, p[s.wq]), p[s.bq]);
    Var k = ops::AddRowBroadcast(ops::Matmul(kv_in, p[s.wk]), p[s.bk]);
    Var v = ops::AddRowBroadcast(ops::Matmul(kv_in, p[s.wv]), p[s.bv]);
    const std::size_t h = config_.heads;
    const std::size_t dh = config_.d_model / h;
    Var ctx;
    if (h == 1) {
      ctx = Attention(q, k, v, c, causal, config_.renormalize_confidence);
    } else {
      std::vector<Var> heads;
      heads.reserve(h);
      for (std::size_t i = 0; i < h; ++i) {
        heads.push_back(Attention(ops::SliceCols(q, i * dh, (i + 1) * dh),
                                  ops::SliceCols(k, i * dh, (i + 1) * dh),
                                  ops::SliceCols(v, i * dh, (i + 1) * dh), c, causal,
                                  config_.renormalize_confidence));
      }
      ctx = ops::ConcatCols(heads);
    }
    return ops::AddRowBroadcast(ops::Matmul(ctx, p[s.wo]), p[s.bo]);
  }

  ModelConfig config_;
  ParamLayout layout_;
};

}  // namespace confbt
