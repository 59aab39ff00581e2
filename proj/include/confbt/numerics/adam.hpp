// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "confbt/numerics/tensor.hpp"
#include "confbt/util/error.hpp"

namespace confbt {

/// Inverse square-root schedule with linear warm-up:
///   lr(s) = scale * d_model^-0.5 * min(s^-0.5, s * warmup^-1.5)
/// The peak is reached at s == warmup.
struct LearningRateSchedule {
  double scale = 1.0;
  std::size_t d_model = 64;
  std::uint64_t warmup_steps = 200;

  double operator()(std::uint64_t step) const {
    if (step == 0) return 0.0;
    const double s = static_cast<double>(step);
    const double w = static_cast<double>(std::max<std::uint64_t>(warmup_steps, 1));
    return scale / std::sqrt(static_cast<double>(d_model)) *
           std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
  }
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  AdamState(double b1, double b2, double eps) : beta1(b1), beta2(b2), epsilon(eps) {}

  void Init(std::span<const Tensor> params) {
    first_moment.clear();
    second_moment.clear();
    for (const Tensor& p : params) {
      first_moment.emplace_back(p.shape());
      second_moment.emplace_back(p.shape());
    }
    step = 0;
  }
};

/// One bias-corrected Adam update; the learning rate is lr_schedule(step)
/// for the incremented step counter. Returns the learning rate used.
template <typename Schedule>
double AdamStep(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
                const Schedule& lr_schedule) {
  if (state.first_moment.empty() && !params.empty()) {
    state.Init(std::span<const Tensor>(params.data(), params.size()));
  }
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    Fail(ErrorKind::kDimension, "adam: ", params.size(), " params, ", grads.size(), " grads, ",
         state.first_moment.size(), " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].shape() != grads[k].shape() ||
        params[k].shape() != state.first_moment[k].shape()) {
      Fail(ErrorKind::kDimension, "adam: parameter ", k, " has shape ",
           ShapeString(params[k].shape()), " but gradient ", ShapeString(grads[k].shape()));
    }
  }
  ++state.step;
  const double lr = lr_schedule(state.step);
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
  return lr;
}

}  // namespace confbt
