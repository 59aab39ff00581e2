// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "confbt/confidence/measures.hpp"
#include "confbt/uncertainty/mc_dropout.hpp"

namespace confbt {
namespace {

struct ToyModel {
  ModelConfig config;
  TransformerParams params;
  ToyModel() {
    config.src_vocab = 9;
    config.tgt_vocab = 9;
    config.d_model = 8;
    config.ff_size = 16;
    config.layers = 2;
    config.heads = 2;
    config.dropout = 0.1;
    params = TransformerParams::Init(config, 31);
  }
};

// Two-pass population variance, summed in reverse order.
double TwoPassVariance(const std::vector<double>& p) {
  double mean = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) mean += *it;
  mean /= static_cast<double>(p.size());
  double v = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) v += (*it - mean) * (*it - mean);
  return v / static_cast<double>(p.size());
}

TEST(Expectation, Examples) {
  const auto s = McSampleSet::FromSentenceProbs({0.2, 0.4, 0.6});
  EXPECT_NEAR(Expectation(s).sentence_expectation, 0.4, 1e-15);
  const auto c = McSampleSet::FromSentenceProbs({0.3, 0.3, 0.3, 0.3});
  EXPECT_EQ(Expectation(c).sentence_expectation, std::exp(std::log(0.3)));
}

TEST(Variance, Examples) {
  const auto s = McSampleSet::FromSentenceProbs({0.2, 0.4, 0.6});
  EXPECT_NEAR(Variance(s).sentence_variance, (0.04 + 0.16 + 0.36) / 3.0 - 0.16, 1e-15);
  EXPECT_EQ(Variance(McSampleSet::FromSentenceProbs({0.7, 0.7, 0.7})).sentence_variance, 0.0);
  const auto one = Variance(McSampleSet::FromSentenceProbs({0.35}));
  EXPECT_EQ(one.sentence_variance, 0.0);
  EXPECT_EQ(one.sentence_expectation, std::exp(std::log(0.35)));
}

TEST(Uncertainty, RandomSampleSetsRespectBoundsAndTwoPassOracle) {
  RngStream rng(1, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.Below(30), n = 1 + rng.Below(6);
    std::vector<std::vector<double>> rows(k, std::vector<double>(n));
    const int regime = trial % 3;
    for (auto& r : rows)
      for (auto& p : r) {
        const double u = rng.Uniform();
        p = regime == 0 ? u : regime == 1 ? 1.0 - 1e-9 * u : std::max(1e-300, std::pow(u, 8));
      }
    const auto s = McSampleSet::FromWordProbs(rows);
    const auto u = Variance(s);
    auto check = [](double e, double v) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, e);
      EXPECT_LE(e, 1.0);
    };
    check(u.sentence_expectation, u.sentence_variance);
    EXPECT_NEAR(u.sentence_variance, TwoPassVariance(s.SentenceProbs()), 1e-10);
    for (std::size_t i = 0; i < n; ++i) {
      check(u.token_expectations[i], u.token_variances[i]);
      std::vector<double> col;
      for (std::size_t p = 0; p < k; ++p) col.push_back(s.word_prob(p, i));
      EXPECT_NEAR(u.token_variances[i], TwoPassVariance(col), 1e-10);
      double rev = 0.0;
      for (auto it = col.rbegin(); it != col.rend(); ++it) rev += *it;
      EXPECT_NEAR(u.token_expectations[i], rev / static_cast<double>(k), 1e-12);
    }
  }
}

TEST(Uncertainty, PermutationInvariant) {
  RngStream rng(2, 2);
  std::vector<double> p(20);
  for (auto& v : p) v = rng.Uniform();
  const auto a = Variance(McSampleSet::FromSentenceProbs(p));
  std::reverse(p.begin(), p.end());
  std::rotate(p.begin(), p.begin() + 7, p.end());
  const auto b = Variance(McSampleSet::FromSentenceProbs(p));
  EXPECT_NEAR(a.sentence_expectation, b.sentence_expectation, 1e-15);
  EXPECT_NEAR(a.sentence_variance, b.sentence_variance, 1e-15);
}

TEST(McForward, ZeroDropoutRowsEqualDeterministicPass) {
  const ToyModel t;
  const Transformer m(t.config);
  const TokenIds src{4, 5, 6}, pred{7, 8, 4};
  McOptions opt;
  opt.k = 6;
  opt.dropout = 0.0;
  const auto s = McForward(m, t.params, src, pred, opt, RngStream(3, 0));
  RngStream r;
  const auto det = m.ForwardLogprobs(t.params, src, pred, r, {});
  ASSERT_EQ(s.positions, pred.size() + 1);
  for (std::size_t k = 0; k < opt.k; ++k)
    for (std::size_t i = 0; i < s.positions; ++i) EXPECT_EQ(s.word_logprob(k, i), det[i]);
  const auto u = Variance(s);
  EXPECT_EQ(u.sentence_variance, 0.0);
  const auto ptp = PtpConfidence(det);
  EXPECT_EQ(u.sentence_expectation, ptp.sentence);
  EXPECT_EQ(u.token_expectations, ptp.words);
}

TEST(McForward, DeterministicAndOrderIndependent) {
  const ToyModel t;
  const Transformer m(t.config);
  const TokenIds src{4, 5, 6, 7}, pred{5, 6};
  McOptions opt;
  opt.k = 20;
  const RngStream rng(42, 9);
  const auto a = McForward(m, t.params, src, pred, opt, rng);
  const auto b = McForward(m, t.params, src, pred, opt, rng);
  EXPECT_EQ(a, b);
  opt.threads = 4;
  EXPECT_EQ(McForward(m, t.params, src, pred, opt, rng), a);
  // Evaluating pass k alone reproduces row k.
  for (std::size_t k : {19, 0, 7}) {
    RngStream pass = rng.Substream(k);
    ForwardOptions fo;
    fo.training = true;
    fo.dropout = opt.dropout;
    const auto lp = m.ForwardLogprobs(t.params, src, pred, pass, fo);
    for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_EQ(a.word_logprob(k, i), lp[i]);
  }
  // Dropout active: passes differ.
  EXPECT_NE(a.sentence_logprobs[0], a.sentence_logprobs[1]);
}

TEST(McForward, RealRunsRespectBounds) {
  const ToyModel t;
  const Transformer m(t.config);
  RngStream rng(5, 5);
  for (int run = 0; run < 100; ++run) {
    TokenIds src, pred;
    for (std::size_t i = 0, n = 1 + rng.Below(5); i < n; ++i) src.push_back(4 + int(rng.Below(5)));
    for (std::size_t i = 0, n = 1 + rng.Below(5); i < n; ++i) pred.push_back(4 + int(rng.Below(5)));
    McOptions opt;
    opt.k = 5;
    opt.dropout = 0.3;
    const auto u = Variance(McForward(m, t.params, src, pred, opt, rng.Substream(run)));
    EXPECT_LE(0.0, u.sentence_variance);
    EXPECT_LE(u.sentence_variance, u.sentence_expectation);
    EXPECT_LE(u.sentence_expectation, 1.0);
    for (std::size_t i = 0; i < u.token_variances.size(); ++i) {
      EXPECT_LE(0.0, u.token_variances[i]);
      EXPECT_LE(u.token_variances[i], u.token_expectations[i]);
      EXPECT_LE(u.token_expectations[i], 1.0);
    }
  }
}

TEST(McForward, RowsMultiplyToSentence) {
  const ToyModel t;
  const Transformer m(t.config);
  McOptions opt;
  opt.k = 4;
  const auto s = McForward(m, t.params, {4, 5}, {6, 7, 8}, opt, RngStream(1, 1));
  for (std::size_t k = 0; k < s.k; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < s.positions; ++i) total += s.word_logprob(k, i);
    EXPECT_NEAR(total, s.sentence_logprobs[k], 1e-6 * std::abs(total));
  }
}

TEST(McForward, Errors) {
  const ToyModel t;
  const Transformer m(t.config);
  McOptions opt;
  EXPECT_THROW(McForward(m, t.params, {4}, {}, opt, RngStream()), Error);
  opt.k = 0;
  EXPECT_THROW(McForward(m, t.params, {4}, {5}, opt, RngStream()), Error);
}

TEST(ScoreDump, Fields) {
  const auto s = McSampleSet::FromWordProbs({{0.5, 0.5}, {0.25, 1.0}});
  const auto j = ScoreDumpRecord("p1", s, Variance(s), 0.2);
  for (const char* key : {"pair_id", "K", "sentence_expectation", "sentence_variance",
                          "token_expectations", "token_variances", "ptp"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["K"], 2);
}

TEST(Measures, HandValues) {
  UncertaintyStats u;
  u.sentence_expectation = 0.5;
  u.sentence_variance = 0.1;
  EXPECT_NEAR(VarConfidence(u, 2.0).sentence, 0.81, 1e-12);
  EXPECT_NEAR(CevConfidence(u, 2.0).sentence, 0.64, 1e-12);
  u.sentence_expectation = 0.4;
  EXPECT_EQ(ExpConfidence(u).sentence, 0.4);
  EXPECT_NEAR(PtpConfidence({std::log(0.5), std::log(0.5)}).sentence, 0.25, 1e-15);
  EXPECT_EQ(PtpConfidence({0.0, 0.0}).sentence, 1.0);
}

TEST(Measures, Boundaries) {
  UncertaintyStats u;
  u.sentence_expectation = 0.3;
  u.sentence_variance = 0.0;
  for (double a : {0.5, 1.0, 2.0, 5.0}) {
    EXPECT_EQ(VarConfidence(u, a).sentence, 1.0);
    EXPECT_EQ(CevConfidence(u, a).sentence, 1.0);
  }
  u.sentence_variance = 0.3;
  EXPECT_EQ(CevConfidence(u, 2.0).sentence, 0.0);
  u.sentence_expectation = 0.0;
  u.sentence_variance = 0.0;
  const auto c = CevConfidence(u, 2.0);
  EXPECT_EQ(c.sentence, 0.0);
  ASSERT_EQ(c.flags.size(), 1u);
  EXPECT_EQ(c.flags[0], kFlagZeroExpectation);
  EXPECT_THROW(VarConfidence(u, 0.0), Error);
  EXPECT_THROW(CevConfidence(u, -1.0), Error);
}

TEST(Measures, RandomInputsStayInUnitIntervalAndMonotone) {
  RngStream rng(7, 7);
  for (int trial = 0; trial < 5000; ++trial) {
    UncertaintyStats u;
    u.sentence_expectation = rng.Uniform();
    u.sentence_variance = u.sentence_expectation * rng.Uniform();
    u.token_expectations = {rng.Uniform()};
    u.token_variances = {u.token_expectations[0] * rng.Uniform()};
    const double a = 0.1 + 5 * rng.Uniform(), b = 0.1 + 5 * rng.Uniform();
    for (const auto& c : {ExpConfidence(u), VarConfidence(u, a), CevConfidence(u, b)}) {
      EXPECT_GE(c.sentence, 0.0);
      EXPECT_LE(c.sentence, 1.0);
      for (double w : c.words) {
        EXPECT_GE(w, 0.0);
        EXPECT_LE(w, 1.0);
      }
    }
    UncertaintyStats more = u;
    more.sentence_variance = std::min(u.sentence_expectation, u.sentence_variance * 1.5 + 1e-3);
    EXPECT_LE(VarConfidence(more, a).sentence, VarConfidence(u, a).sentence);
    EXPECT_LE(CevConfidence(more, b).sentence, CevConfidence(u, b).sentence);
    if (u.sentence_variance > 0 && u.sentence_variance < 1) {
      EXPECT_LE(VarConfidence(u, a + 1).sentence, VarConfidence(u, a).sentence);
    }
  }
}

TEST(Measures, UnitExponentsWithoutVariance) {
  UncertaintyStats u;
  u.sentence_expectation = 0.37;
  EXPECT_EQ(ExpConfidence(u).sentence, 0.37);
  EXPECT_EQ(VarConfidence(u, 1.0).sentence, 1.0);
  EXPECT_EQ(CevConfidence(u, 1.0).sentence, 1.0);
}

TEST(ConfidenceRecord, JsonRoundTripAndValidation) {
  ConfidenceRecord r{"s3", Measure::kVar, 2.0, 3.0, 0.5, {0.1, 1.0}, {"x"}};
  const nlohmann::json j = r;
  EXPECT_EQ(j.get<ConfidenceRecord>(), r);
  nlohmann::json bad = j;
  bad["sentence_confidence"] = 1.5;
  EXPECT_THROW(bad.get<ConfidenceRecord>(), Error);
  EXPECT_EQ(ParseMeasure("cev"), Measure::kCev);
  EXPECT_THROW(ParseMeasure("qe"), Error);
}

}  // namespace
}  // namespace confbt
