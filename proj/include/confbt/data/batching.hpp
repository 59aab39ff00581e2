// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "confbt/util/error.hpp"

namespace confbt {

/// Source/target token counts of one pair.
struct PairLength {
  std::size_t source = 0;
  std::size_t target = 0;
  std::size_t longest() const { return std::max(source, target); }
};

/// Groups pair indices into batches of similar length. Pairs are sorted by
/// max(source, target) length (stable on index) and packed greedily so that
/// batch_size * longest_in_batch never exceeds `budget`.
inline std::vector<std::vector<std::size_t>> BatchByTokens(const std::vector<PairLength>& pairs,
                                                           std::size_t budget) {
  if (budget == 0) Fail(ErrorKind::kConfig, "token budget must be positive");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].longest() > budget) {
      Fail(ErrorKind::kValue, "pair ", i, " has ", pairs[i].longest(),
           " tokens, more than the batch budget of ", budget);
    }
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].longest() < pairs[b].longest();
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t cur_max = 0;
  for (std::size_t idx : order) {
    const std::size_t len = std::max<std::size_t>(pairs[idx].longest(), 1);
    const std::size_t new_max = std::max(cur_max, len);
    if (!cur.empty() && (cur.size() + 1) * new_max > budget) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_max = 0;
    }
    cur.push_back(idx);
    cur_max = std::max(cur_max, len);
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

}  // namespace confbt
