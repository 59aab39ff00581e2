// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "confbt/model/loss.hpp"
#include "confbt/model/transformer.hpp"
#include "confbt/util/parallel.hpp"

namespace confbt {

/// A training pair with its sentence weight and optional word confidences
/// (one per source token). Authentic pairs carry weight 1.
struct WeightedPair {
  TokenIds source;
  TokenIds target;
  double weight = 1.0;
  std::optional<std::vector<double>> word_confidence;
  bool synthetic = false;
};

/// Pairs trained together in one optimizer step. Sequences are processed
/// one at a time, so there is no padding.
struct WeightedBatch {
  std::vector<WeightedPair> pairs;

  std::size_t num_target_tokens() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.target.size() + 1;
    return n;
  }

  void Validate() const {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      if (!(p.weight >= 0.0 && p.weight <= 1.0)) {
        Fail(ErrorKind::kValue, "pair ", i, " has sentence weight ", p.weight, " outside [0,1]");
      }
      if (p.word_confidence) {
        if (p.word_confidence->size() != p.source.size()) {
          Fail(ErrorKind::kDimension, "pair ", i, " has ", p.word_confidence->size(),
               " word confidences for ", p.source.size(), " source tokens");
        }
        for (double c : *p.word_confidence)
          if (!(c >= 0.0 && c <= 1.0)) Fail(ErrorKind::kValue, "pair ", i, " has word confidence ", c, " outside [0,1]");
      }
    }
  }
};

struct WeightedLossOptions {
  bool use_sentence_weights = true;
  bool use_word_confidence = true;
  bool training = true;  // dropout on
  /// Fixed number of gradient partial sums; results do not depend on the
  /// worker count.
  std::size_t shards = 8;
  std::size_t threads = 1;
};

struct WeightedLossResult {
  double loss = 0.0;
  std::size_t tokens = 0;
  std::vector<Tensor> gradients;  // empty unless requested
};

namespace detail {

/// Attention confidence for a pair: its word confidences plus 1 for </s>.
inline std::optional<ConfidenceVector> SourceConfidence(const WeightedPair& p) {
  if (!p.word_confidence) return std::nullopt;
  ConfidenceVector c = *p.word_confidence;
  c.push_back(1.0);
  return c;
}

}  // namespace detail

/// sum_s w_s * NLL_s / N where NLL_s is the smoothed token-summed NLL of
/// pair s and N the number of target tokens (</s> included) in the batch.
/// Pair s draws dropout masks from rng.Substream(s).
inline WeightedLossResult WeightedLoss(const Transformer& model, const TransformerParams& params,
                                       const WeightedBatch& batch, const RngStream& rng,
                                       const WeightedLossOptions& opt, bool want_gradients) {
  batch.Validate();
  WeightedLossResult res;
  res.tokens = batch.num_target_tokens();
  if (batch.pairs.empty() || res.tokens == 0) Fail(ErrorKind::kValue, "weighted_loss over an empty batch");
  const double inv_n = 1.0 / static_cast<double>(res.tokens);
  const std::size_t num = batch.pairs.size();
  const std::size_t shards = std::max<std::size_t>(1, std::min(opt.shards, num));
  std::vector<double> shard_loss(shards, 0.0);
  std::vector<std::vector<Tensor>> shard_grad(shards);
  const double eps = model.config().label_smoothing;
  const auto conv = model.config().smoothing;
  ParallelFor(shards, opt.threads, [&](std::size_t sh) {
    const std::size_t begin = sh * num / shards, end = (sh + 1) * num / shards;
    if (want_gradients) {
      shard_grad[sh].reserve(params.size());
      for (const auto& t : params.tensors) shard_grad[sh].emplace_back(t.shape());
    }
    for (std::size_t s = begin; s < end; ++s) {
      const WeightedPair& p = batch.pairs[s];
      const double w = opt.use_sentence_weights ? p.weight : 1.0;
      const auto conf = opt.use_word_confidence ? detail::SourceConfidence(p) : std::nullopt;
      Tape tape(want_gradients);
      ParamBinder binder(tape, params);
      RngStream pair_rng = rng.Substream(s);
      ForwardOptions fo;
      fo.training = opt.training;
      fo.confidence = conf ? &*conf : nullptr;
      Var lp = model.ForwardMatrix(binder, p.source, p.target, pair_rng, fo);
      TokenIds gold = p.target;
      gold.push_back(kEosId);
      Var nll = SmoothedNllSum(lp, gold, eps, conv);
      shard_loss[sh] += w * nll.value().item();
      if (want_gradients && w != 0.0) {
        tape.Backward(nll, w * inv_n);
        binder.AccumulateInto(shard_grad[sh]);
      }
    }
  });
  double total = 0.0;
  for (double l : shard_loss) total += l;
  res.loss = total * inv_n;
  if (want_gradients) {
    res.gradients = std::move(shard_grad[0]);
    for (std::size_t sh = 1; sh < shards; ++sh) {
      for (std::size_t k = 0; k < res.gradients.size(); ++k) {
        auto dst = res.gradients[k].data();
        auto src = shard_grad[sh][k].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }
  return res;
}

}  // namespace confbt
