// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/model/transformer.hpp"
#include "confbt/numerics/rng.hpp"
#include "confbt/util/parallel.hpp"

namespace confbt {

/// K stochastic-pass samples of the probability of one fixed prediction.
/// Log values are authoritative; probabilities are their exponentials.
/// Word-level columns cover each predicted token followed by </s>.
struct McSampleSet {
  std::size_t k = 0;
  std::size_t positions = 0;
  std::vector<double> sentence_logprobs;  // K
  std::vector<double> word_logprobs;      // K x positions, row-major

  double word_logprob(std::size_t pass, std::size_t i) const {
    return word_logprobs[pass * positions + i];
  }
  double word_prob(std::size_t pass, std::size_t i) const {
    return std::exp(word_logprob(pass, i));
  }
  double sentence_prob(std::size_t pass) const { return std::exp(sentence_logprobs[pass]); }

  std::vector<double> SentenceProbs() const {
    std::vector<double> p(k);
    for (std::size_t s = 0; s < k; ++s) p[s] = sentence_prob(s);
    return p;
  }

  /// Builds a sample set directly from probabilities (k rows of word probs);
  /// sentence values are the row products.
  static McSampleSet FromWordProbs(const std::vector<std::vector<double>>& rows) {
    McSampleSet s;
    s.k = rows.size();
    s.positions = rows.empty() ? 0 : rows.front().size();
    for (const auto& r : rows) {
      if (r.size() != s.positions) Fail(ErrorKind::kDimension, "ragged word probability rows");
      double total = 0.0;
      for (double p : r) {
        const double lp = std::log(p);
        s.word_logprobs.push_back(lp);
        total += lp;
      }
      s.sentence_logprobs.push_back(total);
    }
    return s;
  }

  /// Sentence-only sample set from K probabilities.
  static McSampleSet FromSentenceProbs(const std::vector<double>& probs) {
    std::vector<std::vector<double>> rows;
    for (double p : probs) rows.push_back({p});
    return FromWordProbs(rows);
  }

  friend bool operator==(const McSampleSet&, const McSampleSet&) = default;
};

/// Expectations and variances of sentence- and token-level probabilities.
struct UncertaintyStats {
  double sentence_expectation = 0.0;
  double sentence_variance = 0.0;
  std::vector<double> token_expectations;
  std::vector<double> token_variances;
};

struct McOptions {
  std::size_t k = 20;
  double dropout = 0.1;
  /// Use the per-token geometric mean instead of the raw product for the
  /// sentence probability.
  bool length_normalized = false;
  std::size_t threads = 1;
};

/// Worker count is a runtime setting and is not serialized.
inline void to_json(nlohmann::json& j, const McOptions& o) {
  j = nlohmann::json{{"k", o.k}, {"dropout", o.dropout}, {"length_normalized", o.length_normalized}};
}

inline void from_json(const nlohmann::json& j, McOptions& o) {
  o.k = j.at("k").get<std::size_t>();
  o.dropout = j.at("dropout").get<double>();
  o.length_normalized = j.at("length_normalized").get<bool>();
}

/// K teacher-forced passes with dropout active over the fixed prediction
/// `prediction` given `source`. Pass k draws its masks from
/// rng.Substream(k), so results do not depend on evaluation order.
inline McSampleSet McForward(const Transformer& model, const TransformerParams& params,
                             const TokenIds& source, const TokenIds& prediction,
                             const McOptions& opt, const RngStream& rng) {
  if (prediction.empty()) Fail(ErrorKind::kLength, "mc_forward: empty prediction");
  if (opt.k < 1) Fail(ErrorKind::kConfig, "mc_forward: K must be >= 1");
  McSampleSet s;
  s.k = opt.k;
  s.positions = prediction.size() + 1;
  s.sentence_logprobs.assign(opt.k, 0.0);
  s.word_logprobs.assign(opt.k * s.positions, 0.0);
  ParallelFor(opt.k, opt.threads, [&](std::size_t pass) {
    RngStream pass_rng = rng.Substream(pass);
    ForwardOptions fo;
    fo.training = true;
    fo.dropout = opt.dropout;
    const auto lp = model.ForwardLogprobs(params, source, prediction, pass_rng, fo);
    double total = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      s.word_logprobs[pass * s.positions + i] = lp[i];
      total += lp[i];
    }
    s.sentence_logprobs[pass] =
        opt.length_normalized ? total / static_cast<double>(lp.size()) : total;
  });
  return s;
}

namespace detail {

struct MeanVar {
  double mean;
  double var;
};

// E = (1/K) sum p_k and Var = (1/K) sum p_k^2 - E^2, both evaluated on
// samples shifted by p_0 (variance is shift-invariant). Constant samples then
// give E == p_0 and Var == 0 exactly. Results are clamped to 0 <= Var <= E <= 1.
inline MeanVar MomentStats(const std::vector<double>& p) {
  const double k = static_cast<double>(p.size());
  const double shift = p.front();
  double s1 = 0.0, s2 = 0.0;
  for (double v : p) {
    const double d = v - shift;
    s1 += d;
    s2 += d * d;
  }
  const double mean_shift = s1 / k;
  const double mean = std::clamp(shift + mean_shift, 0.0, 1.0);
  const double var = std::clamp(s2 / k - mean_shift * mean_shift, 0.0, mean);
  return {mean, var};
}

}  // namespace detail

/// Expectation of sentence and token probabilities: arithmetic means of the
/// exponentiated samples.
inline UncertaintyStats Expectation(const McSampleSet& s) {
  if (s.k < 1) Fail(ErrorKind::kConfig, "expectation: K must be >= 1");
  UncertaintyStats u;
  u.sentence_expectation = detail::MomentStats(s.SentenceProbs()).mean;
  u.token_expectations.resize(s.positions);
  std::vector<double> col(s.k);
  for (std::size_t i = 0; i < s.positions; ++i) {
    for (std::size_t p = 0; p < s.k; ++p) col[p] = s.word_prob(p, i);
    u.token_expectations[i] = detail::MomentStats(col).mean;
  }
  return u;
}

/// Expectations and population variances (divide by K).
inline UncertaintyStats Variance(const McSampleSet& s) {
  if (s.k < 1) Fail(ErrorKind::kConfig, "variance: K must be >= 1");
  UncertaintyStats u;
  const auto sent = detail::MomentStats(s.SentenceProbs());
  u.sentence_expectation = sent.mean;
  u.sentence_variance = sent.var;
  u.token_expectations.resize(s.positions);
  u.token_variances.resize(s.positions);
  std::vector<double> col(s.k);
  for (std::size_t i = 0; i < s.positions; ++i) {
    for (std::size_t p = 0; p < s.k; ++p) col[p] = s.word_prob(p, i);
    const auto mv = detail::MomentStats(col);
    u.token_expectations[i] = mv.mean;
    u.token_variances[i] = mv.var;
  }
  return u;
}

/// One line of the score dump (JSON-lines).
inline nlohmann::json ScoreDumpRecord(const std::string& pair_id, const McSampleSet& s,
                                      const UncertaintyStats& u, double ptp) {
  return nlohmann::json{{"pair_id", pair_id},
                        {"K", s.k},
                        {"sentence_expectation", u.sentence_expectation},
                        {"sentence_variance", u.sentence_variance},
                        {"token_expectations", u.token_expectations},
                        {"token_variances", u.token_variances},
                        {"ptp", ptp}};
}

}  // namespace confbt
