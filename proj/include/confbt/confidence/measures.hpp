// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/uncertainty/mc_dropout.hpp"

namespace confbt {

enum class Measure { kPtp, kExp, kVar, kCev };

inline std::string ToString(Measure m) {
  switch (m) {
    case Measure::kPtp: return "ptp";
    case Measure::kExp: return "exp";
    case Measure::kVar: return "var";
    case Measure::kCev: return "cev";
  }
  return "cev";
}

inline Measure ParseMeasure(const std::string& s) {
  if (s == "ptp") return Measure::kPtp;
  if (s == "exp") return Measure::kExp;
  if (s == "var") return Measure::kVar;
  if (s == "cev") return Measure::kCev;
  Fail(ErrorKind::kConfig, "unknown measure '", s, "' (expected ptp|exp|var|cev)");
}

struct MeasureConfig {
  Measure kind = Measure::kCev;
  double alpha = 2.0;
  double beta = 2.0;

  void Validate() const {
    if (!(alpha > 0.0)) Fail(ErrorKind::kConfig, "alpha must be > 0");
    if (!(beta > 0.0)) Fail(ErrorKind::kConfig, "beta must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const MeasureConfig& m) {
  j = nlohmann::json{{"measure", ToString(m.kind)}, {"alpha", m.alpha}, {"beta", m.beta}};
}

inline void from_json(const nlohmann::json& j, MeasureConfig& m) {
  m.kind = ParseMeasure(j.at("measure").get<std::string>());
  m.alpha = j.at("alpha").get<double>();
  m.beta = j.at("beta").get<double>();
}

inline constexpr const char* kFlagZeroExpectation = "zero_expectation";
inline constexpr const char* kFlagEmptyPrediction = "empty_prediction";

/// Sentence-level confidence plus one word-level value per scored position.
struct ConfidenceValues {
  double sentence = 0.0;
  std::vector<double> words;
  std::vector<std::string> flags;
};

/// Predicted translation probability: the product of the per-step
/// probabilities of the prediction, and the step probabilities themselves.
inline ConfidenceValues PtpConfidence(const std::vector<double>& step_logprobs,
                                      bool length_normalized = false) {
  ConfidenceValues c;
  double total = 0.0;
  for (double lp : step_logprobs) {
    total += lp;
    c.words.push_back(std::exp(lp));
  }
  if (length_normalized && !step_logprobs.empty()) total /= static_cast<double>(step_logprobs.size());
  c.sentence = std::exp(total);
  return c;
}

/// Expected translation probability.
inline ConfidenceValues ExpConfidence(const UncertaintyStats& u) {
  return {u.sentence_expectation, u.token_expectations, {}};
}

namespace detail {
inline double VarFormula(double var, double alpha) {
  return std::clamp(std::pow(1.0 - std::clamp(var, 0.0, 1.0), alpha), 0.0, 1.0);
}
// (1 - Var/E)^beta; E == 0 is defined as zero confidence.
inline double CevFormula(double mean, double var, double beta, bool* zero_mean) {
  if (!(mean > 0.0)) {
    if (zero_mean) *zero_mean = true;
    return 0.0;
  }
  const double ratio = std::clamp(var / mean, 0.0, 1.0);
  return std::clamp(std::pow(1.0 - ratio, beta), 0.0, 1.0);
}
}  // namespace detail

/// (1 - Var)^alpha at sentence and token level.
inline ConfidenceValues VarConfidence(const UncertaintyStats& u, double alpha) {
  if (!(alpha > 0.0)) Fail(ErrorKind::kConfig, "alpha must be > 0");
  ConfidenceValues c;
  c.sentence = detail::VarFormula(u.sentence_variance, alpha);
  for (double v : u.token_variances) c.words.push_back(detail::VarFormula(v, alpha));
  return c;
}

/// (1 - Var/E)^beta at sentence and token level.
inline ConfidenceValues CevConfidence(const UncertaintyStats& u, double beta) {
  if (!(beta > 0.0)) Fail(ErrorKind::kConfig, "beta must be > 0");
  ConfidenceValues c;
  bool zero = false;
  c.sentence = detail::CevFormula(u.sentence_expectation, u.sentence_variance, beta, &zero);
  for (std::size_t i = 0; i < u.token_expectations.size(); ++i) {
    c.words.push_back(detail::CevFormula(u.token_expectations[i], u.token_variances[i], beta, &zero));
  }
  if (zero) c.flags.push_back(kFlagZeroExpectation);
  return c;
}

/// Dispatch for the MC-based measures (EXP/VAR/CEV).
inline ConfidenceValues MeasureFromStats(const UncertaintyStats& u, const MeasureConfig& m) {
  switch (m.kind) {
    case Measure::kExp: return ExpConfidence(u);
    case Measure::kVar: return VarConfidence(u, m.alpha);
    case Measure::kCev: return CevConfidence(u, m.beta);
    case Measure::kPtp: break;
  }
  Fail(ErrorKind::kConfig, "PTP is computed from decoding probabilities, not MC statistics");
}

/// Scored confidence for one synthetic pair; the contract between scoring
/// and confidence-aware training.
struct ConfidenceRecord {
  std::string pair_id;
  Measure measure = Measure::kCev;
  double alpha = 2.0;
  double beta = 2.0;
  double sentence_confidence = 0.0;
  std::vector<double> word_confidences;
  std::vector<std::string> flags;

  friend bool operator==(const ConfidenceRecord&, const ConfidenceRecord&) = default;
};

inline void to_json(nlohmann::json& j, const ConfidenceRecord& r) {
  j = nlohmann::json{{"pair_id", r.pair_id},
                     {"measure", ToString(r.measure)},
                     {"alpha", r.alpha},
                     {"beta", r.beta},
                     {"sentence_confidence", r.sentence_confidence},
                     {"word_confidences", r.word_confidences},
                     {"flags", r.flags}};
}

inline void from_json(const nlohmann::json& j, ConfidenceRecord& r) {
  r.pair_id = j.at("pair_id").get<std::string>();
  r.measure = ParseMeasure(j.at("measure").get<std::string>());
  r.alpha = j.at("alpha").get<double>();
  r.beta = j.at("beta").get<double>();
  r.sentence_confidence = j.at("sentence_confidence").get<double>();
  r.word_confidences = j.at("word_confidences").get<std::vector<double>>();
  r.flags = j.value("flags", std::vector<std::string>{});
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(r.sentence_confidence) ||
      !std::all_of(r.word_confidences.begin(), r.word_confidences.end(), in_unit)) {
    Fail(ErrorKind::kValue, "confidence record ", r.pair_id, " has values outside [0,1]");
  }
}

}  // namespace confbt
