// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/data/text.hpp"
#include "confbt/numerics/rng.hpp"
#include "confbt/util/error.hpp"
#include "confbt/util/parallel.hpp"

namespace confbt {

inline constexpr int kBleuOrder = 4;

/// Sufficient statistics of one candidate/reference sentence pair.
struct BleuStats {
  std::array<std::size_t, kBleuOrder> matches{};
  std::array<std::size_t, kBleuOrder> totals{};
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o) {
    for (int n = 0; n < kBleuOrder; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    cand_len += o.cand_len;
    ref_len += o.ref_len;
    return *this;
  }
};

struct BleuReport {
  double score = 0.0;  // 0..100
  std::array<double, kBleuOrder> precisions{};
  double brevity_penalty = 0.0;
  std::size_t cand_len = 0;
  std::size_t ref_len = 0;
};

inline void to_json(nlohmann::json& j, const BleuReport& r) {
  j = nlohmann::json{{"bleu", r.score},
                     {"precisions", r.precisions},
                     {"brevity_penalty", r.brevity_penalty},
                     {"cand_len", r.cand_len},
                     {"ref_len", r.ref_len}};
}

/// Clipped n-gram counts for one sentence pair (whitespace tokens).
inline BleuStats SentenceBleuStats(const Tokens& cand, const Tokens& ref) {
  BleuStats s;
  s.cand_len = cand.size();
  s.ref_len = ref.size();
  for (int n = 1; n <= kBleuOrder; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i)
      ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<std::string>, std::size_t> cand_counts;
    for (std::size_t i = 0; i + n <= cand.size(); ++i)
      ++cand_counts[std::vector<std::string>(cand.begin() + i, cand.begin() + i + n)];
    for (const auto& [gram, c] : cand_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

/// Corpus BLEU from summed statistics; any zero precision gives 0.
inline BleuReport BleuFromStats(const BleuStats& s) {
  BleuReport r;
  r.cand_len = s.cand_len;
  r.ref_len = s.ref_len;
  double log_sum = 0.0;
  bool zero = s.cand_len == 0;
  for (int n = 0; n < kBleuOrder; ++n) {
    r.precisions[n] = s.totals[n] ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
    if (r.precisions[n] <= 0.0) zero = true;
    else log_sum += std::log(r.precisions[n]);
  }
  if (s.cand_len == 0) {
    r.brevity_penalty = 0.0;
  } else {
    r.brevity_penalty = s.cand_len < s.ref_len
                            ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.cand_len))
                            : 1.0;
  }
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / kBleuOrder);
  return r;
}

inline std::vector<BleuStats> CorpusBleuStats(const std::vector<std::string>& candidates,
                                              const std::vector<std::string>& references) {
  if (candidates.size() != references.size()) {
    Fail(ErrorKind::kValue, "bleu: ", candidates.size(), " candidate lines but ", references.size(),
         " reference lines");
  }
  std::vector<BleuStats> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    out.push_back(SentenceBleuStats(SplitSpaces(candidates[i]), SplitSpaces(references[i])));
  return out;
}

/// Corpus-level 4-gram BLEU against a single reference per line.
inline BleuReport Bleu(const std::vector<std::string>& candidates,
                       const std::vector<std::string>& references) {
  BleuStats total;
  for (const auto& s : CorpusBleuStats(candidates, references)) total += s;
  return BleuFromStats(total);
}

struct SignificanceReport {
  double bleu_a = 0.0;
  double bleu_b = 0.0;
  double mean_a = 0.0;  // mean over resamples
  double mean_b = 0.0;
  double wins_a = 0.0;  // ties add 0.5 to each side
  double wins_b = 0.0;
  std::size_t ties = 0;
  std::string better = "A";
  double p_value = 1.0;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SignificanceReport& r) {
  j = nlohmann::json{{"bleu_a", r.bleu_a},     {"bleu_b", r.bleu_b},     {"mean_a", r.mean_a},
                     {"mean_b", r.mean_b},     {"wins_a", r.wins_a},     {"wins_b", r.wins_b},
                     {"ties", r.ties},         {"better", r.better},     {"p_value", r.p_value},
                     {"resamples", r.resamples}, {"seed", r.seed}};
}

/// Paired bootstrap resampling. Resample r draws its indices from
/// RngStream(seed, 0).Substream(r); p is the fraction of resamples in which
/// the system with the higher full-corpus BLEU does not win.
inline SignificanceReport PairedBootstrap(const std::vector<std::string>& cand_a,
                                          const std::vector<std::string>& cand_b,
                                          const std::vector<std::string>& references,
                                          std::size_t resamples = 1000, std::uint64_t seed = 0,
                                          std::size_t threads = 1) {
  if (cand_a.size() != references.size() || cand_b.size() != references.size()) {
    Fail(ErrorKind::kValue, "bootstrap: systems and references are not aligned (", cand_a.size(), ", ",
         cand_b.size(), ", ", references.size(), " lines)");
  }
  if (resamples < 1) Fail(ErrorKind::kConfig, "bootstrap: resamples must be >= 1");
  const auto sa = CorpusBleuStats(cand_a, references);
  const auto sb = CorpusBleuStats(cand_b, references);
  SignificanceReport r;
  r.resamples = resamples;
  r.seed = seed;
  {
    BleuStats ta, tb;
    for (std::size_t i = 0; i < sa.size(); ++i) {
      ta += sa[i];
      tb += sb[i];
    }
    r.bleu_a = BleuFromStats(ta).score;
    r.bleu_b = BleuFromStats(tb).score;
  }
  r.better = r.bleu_b > r.bleu_a ? "B" : "A";
  const std::size_t n = references.size();
  std::vector<double> ba(resamples), bb(resamples);
  const RngStream root(seed, 0);
  ParallelFor(resamples, threads, [&](std::size_t k) {
    RngStream rng = root.Substream(k);
    BleuStats ta, tb;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = rng.Below(n);
      ta += sa[idx];
      tb += sb[idx];
    }
    ba[k] = BleuFromStats(ta).score;
    bb[k] = BleuFromStats(tb).score;
  });
  for (std::size_t k = 0; k < resamples; ++k) {
    r.mean_a += ba[k] / static_cast<double>(resamples);
    r.mean_b += bb[k] / static_cast<double>(resamples);
    if (ba[k] > bb[k]) r.wins_a += 1.0;
    else if (bb[k] > ba[k]) r.wins_b += 1.0;
    else {
      ++r.ties;
      r.wins_a += 0.5;
      r.wins_b += 0.5;
    }
  }
  const double wins = r.better == "A" ? r.wins_a : r.wins_b;
  r.p_value = std::clamp(1.0 - wins / static_cast<double>(resamples), 0.0, 1.0);
  return r;
}

/// Aligned plain-text table: one row per condition, one column per test set.
inline std::string FormatTable(const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                               const std::vector<std::vector<double>>& values, int precision = 2) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"condition"});
  for (const auto& c : cols) cells.back().push_back(c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> line{rows[i]};
    for (std::size_t j = 0; j < cols.size(); ++j) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(precision) << values.at(i).at(j);
      line.push_back(os.str());
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(cols.size() + 1, 0);
  for (const auto& line : cells)
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size());
  std::ostringstream out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      if (j == 0) out << std::left << std::setw(static_cast<int>(width[j])) << cells[i][j];
      else out << "  " << std::right << std::setw(static_cast<int>(width[j])) << cells[i][j];
    }
    out << '\n';
    if (i == 0) {
      std::size_t total = width[0];
      for (std::size_t j = 1; j < width.size(); ++j) total += 2 + width[j];
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace confbt
