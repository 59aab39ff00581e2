// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

// Finite-difference check of the full model loss with respect to a random
// sample of parameter coordinates.

#pragma once

#include <cmath>
#include <vector>

#include "confbt/model/loss.hpp"
#include "confbt/model/transformer.hpp"
#include "confbt/numerics/rng.hpp"

namespace confbt::testing {

struct ModelCase {
  ModelConfig config;
  TokenIds src;
  TokenIds tgt;
  ConfidenceVector confidence;  // empty: no modulation
  bool dropout = true;
};

inline ModelCase RandomModelCase(std::uint64_t seed) {
  RngStream rng(seed, 77);
  ModelCase mc;
  mc.config.src_vocab = 9;
  mc.config.tgt_vocab = 8;
  mc.config.d_model = 16;
  mc.config.ff_size = 24;
  mc.config.layers = 2;
  mc.config.heads = 2;
  mc.config.dropout = 0.2;
  mc.config.label_smoothing = 0.1;
  mc.config.share_target_embedding = seed % 3 == 0;
  mc.config.confidence_sites = static_cast<ConfidenceSites>(seed % 3);
  const std::size_t ns = 2 + rng.Below(4), nt = 1 + rng.Below(4);
  for (std::size_t i = 0; i < ns; ++i) mc.src.push_back(4 + static_cast<int>(rng.Below(5)));
  for (std::size_t i = 0; i < nt; ++i) mc.tgt.push_back(2 + static_cast<int>(rng.Below(6)));
  if (seed % 2 == 0) {
    for (std::size_t i = 0; i <= ns; ++i) mc.confidence.push_back(0.2 + 0.8 * rng.Uniform());
  }
  return mc;
}

inline double ModelLoss(const Transformer& model, ParamBinder& binder, const ModelCase& mc,
                        std::uint64_t dropout_seed) {
  RngStream rng(dropout_seed, 5);
  ForwardOptions opt;
  opt.training = mc.dropout;
  opt.confidence = mc.confidence.empty() ? nullptr : &mc.confidence;
  TokenIds gold = mc.tgt;
  gold.push_back(kEosId);
  Var lp = model.ForwardMatrix(binder, mc.src, mc.tgt, rng, opt);
  Var loss = SmoothedNll(lp, gold, model.config().label_smoothing, model.config().smoothing);
  return loss.value().item();
}

/// Relative error ||a - n|| / (||a|| + ||n||) over `coords` sampled coordinates.
inline double ModelGradientError(std::uint64_t seed, std::size_t coords = 60, double h = 1e-5) {
  const ModelCase mc = RandomModelCase(seed);
  const Transformer model(mc.config);
  TransformerParams params = TransformerParams::Init(mc.config, seed + 1000);
  // Nonzero biases and gains so every path carries gradient.
  RngStream prng(seed, 3);
  for (auto& t : params.tensors)
    for (auto& v : t.vec()) v += 0.1 * (2.0 * prng.Uniform() - 1.0);

  std::vector<Tensor> analytic;
  {
    Tape tape(true);
    ParamBinder binder(tape, params);
    RngStream rng(seed, 5);
    ForwardOptions opt;
    opt.training = mc.dropout;
    opt.confidence = mc.confidence.empty() ? nullptr : &mc.confidence;
    TokenIds gold = mc.tgt;
    gold.push_back(kEosId);
    Var lp = model.ForwardMatrix(binder, mc.src, mc.tgt, rng, opt);
    Var loss = SmoothedNll(lp, gold, mc.config.label_smoothing, mc.config.smoothing);
    tape.Backward(loss);
    analytic = binder.Gradients();
  }
  auto eval = [&](const TransformerParams& p) {
    Tape tape(false);
    ParamBinder binder(tape, p);
    return ModelLoss(model, binder, mc, seed);
  };
  RngStream pick(seed, 11);
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t c = 0; c < coords; ++c) {
    const std::size_t k = pick.Below(params.size());
    const std::size_t i = pick.Below(params.tensors[k].size());
    const double orig = params.tensors[k][i];
    params.tensors[k][i] = orig + h;
    const double up = eval(params);
    params.tensors[k][i] = orig - h;
    const double down = eval(params);
    params.tensors[k][i] = orig;
    const double num = (up - down) / (2.0 * h);
    const double a = analytic[k][i];
    diff2 += (a - num) * (a - num);
    a2 += a * a;
    n2 += num * num;
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  return denom < 1e-12 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
}

}  // namespace confbt::testing
