// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "confbt/model/config.hpp"
#include "confbt/numerics/autograd.hpp"

namespace confbt {

namespace detail {

struct SmoothingMass {
  double gold;
  double other;
};

inline SmoothingMass SmoothedTarget(double eps, std::size_t vocab, SmoothingConvention conv) {
  if (!(eps >= 0.0 && eps < 1.0)) Fail(ErrorKind::kConfig, "label smoothing must be in [0,1)");
  const double v = static_cast<double>(vocab);
  if (conv == SmoothingConvention::kUniformAll) return {1.0 - eps + eps / v, eps / v};
  if (vocab < 2) return {1.0, 0.0};
  return {1.0 - eps, eps / (v - 1.0)};
}

}  // namespace detail

/// Sum over rows of the cross-entropy between each row of `logprobs` and
/// the label-smoothed gold distribution.
inline Var SmoothedNllSum(Var logprobs, std::span<const int> gold, double eps,
                          SmoothingConvention conv = SmoothingConvention::kOverOthers) {
  const Tensor& lp = logprobs.value();
  kernels::RequireMatrix(lp, "smoothed_nll");
  if (lp.rows() != gold.size()) {
    Fail(ErrorKind::kDimension, "smoothed_nll: ", lp.rows(), " rows but ", gold.size(), " gold tokens");
  }
  const auto mass = detail::SmoothedTarget(eps, lp.cols(), conv);
  double total = 0.0;
  for (std::size_t i = 0; i < lp.rows(); ++i) {
    const auto g = static_cast<std::size_t>(gold[i]);
    if (g >= lp.cols()) Fail(ErrorKind::kVocab, "gold id ", gold[i], " outside vocabulary");
    double row_sum = 0.0;
    for (std::size_t j = 0; j < lp.cols(); ++j) row_sum += lp(i, j);
    double row = mass.gold * lp(i, g);
    if (mass.other != 0.0) row += mass.other * (row_sum - lp(i, g));
    total -= row;
  }
  const auto id = logprobs.id;
  std::vector<int> gv(gold.begin(), gold.end());
  const Shape shape = lp.shape();
  return logprobs.tape->Record(Tensor::Scalar(total), {logprobs},
                               [id, gv = std::move(gv), shape, mass](Tape& t, const Tensor& g) {
                                 const double s = g.item();
                                 Tensor ga(shape, -mass.other * s);
                                 for (std::size_t i = 0; i < gv.size(); ++i)
                                   ga(i, static_cast<std::size_t>(gv[i])) = -mass.gold * s;
                                 t.AccumulateGrad(id, std::move(ga));
                               });
}

/// Mean label-smoothed negative log-likelihood per token.
inline Var SmoothedNll(Var logprobs, std::span<const int> gold, double eps,
                       SmoothingConvention conv = SmoothingConvention::kOverOthers) {
  if (gold.empty()) Fail(ErrorKind::kDimension, "smoothed_nll over zero tokens");
  return ops::Scale(SmoothedNllSum(logprobs, gold, eps, conv), 1.0 / static_cast<double>(gold.size()));
}

/// Value-only convenience wrapper.
inline double SmoothedNllValue(const Tensor& logprobs, std::span<const int> gold, double eps,
                               SmoothingConvention conv = SmoothingConvention::kOverOthers) {
  Tape tape(false);
  return SmoothedNll(tape.Constant(logprobs), gold, eps, conv).value().item();
}

}  // namespace confbt
