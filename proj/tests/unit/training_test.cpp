// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "confbt/data/text.hpp"
#include "confbt/training/mix.hpp"
#include "confbt/training/trainer.hpp"

namespace confbt {
namespace {

ModelConfig SmallConfig() {
  ModelConfig c;
  c.src_vocab = 10;
  c.tgt_vocab = 10;
  c.d_model = 8;
  c.ff_size = 16;
  c.layers = 1;
  c.heads = 2;
  c.dropout = 0.1;
  return c;
}

WeightedPair Pair(TokenIds s, TokenIds t, double w = 1.0) {
  return WeightedPair{std::move(s), std::move(t), w, std::nullopt, false};
}

// Smoothed NLL summed over the target (</s> included), deterministic pass.
double PairNll(const Transformer& m, const TransformerParams& p, const WeightedPair& pair) {
  Tape tape(false);
  ParamBinder b(tape, p);
  RngStream r;
  ForwardOptions fo;
  std::optional<ConfidenceVector> c;
  if (pair.word_confidence) {
    c = *pair.word_confidence;
    c->push_back(1.0);
    fo.confidence = &*c;
  }
  const Tensor lp = m.ForwardMatrix(b, pair.source, pair.target, r, fo).value();
  TokenIds gold = pair.target;
  gold.push_back(kEosId);
  return SmoothedNllValue(lp, gold, m.config().label_smoothing, m.config().smoothing) *
         static_cast<double>(gold.size());
}

WeightedLossOptions Eval(bool sentence = true, bool word = true) {
  WeightedLossOptions o;
  o.training = false;
  o.use_sentence_weights = sentence;
  o.use_word_confidence = word;
  return o;
}

TEST(WeightedLoss, UnitWeightsEqualSmoothedNll) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 1);
  WeightedBatch one{{Pair({4, 5, 6}, {7, 8})}};
  Tape tape(false);
  ParamBinder b(tape, p);
  RngStream r;
  const Tensor lp = m.ForwardMatrix(b, one.pairs[0].source, one.pairs[0].target, r, {}).value();
  const double want = SmoothedNllValue(lp, std::vector<int>{7, 8, kEosId}, c.label_smoothing, c.smoothing);
  EXPECT_EQ(WeightedLoss(m, p, one, RngStream(), Eval(false, false), false).loss, want);

  WeightedBatch two{{Pair({4, 5, 6}, {7, 8}), Pair({9, 4}, {5, 6, 7, 8})}};
  const double nll = (PairNll(m, p, two.pairs[0]) + PairNll(m, p, two.pairs[1])) / 8.0;
  EXPECT_NEAR(WeightedLoss(m, p, two, RngStream(), Eval(), false).loss, nll, 1e-14);
}

TEST(WeightedLoss, TwoPairHandTrace) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 2);
  WeightedBatch batch{{Pair({4, 5}, {6}, 1.0), Pair({7, 8, 9}, {4, 5, 6}, 0.5)}};
  const double nll1 = PairNll(m, p, batch.pairs[0]), nll2 = PairNll(m, p, batch.pairs[1]);
  const double want = (nll1 * 1.0 + nll2 * 0.5) / (2.0 + 4.0);
  EXPECT_NEAR(WeightedLoss(m, p, batch, RngStream(), Eval(), false).loss, want, 1e-14);
  // Sentence weights ignored when the flag is off.
  EXPECT_NEAR(WeightedLoss(m, p, batch, RngStream(), Eval(false, false), false).loss,
              (nll1 + nll2) / 6.0, 1e-14);
}

TEST(WeightedLoss, DerivativeInWeightIsNormalizedNll) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 3);
  WeightedBatch batch{{Pair({4, 5}, {6, 7}, 0.7), Pair({8}, {9}, 0.5)}};
  const double h = 1e-4;
  auto loss_at = [&](double w) {
    WeightedBatch b = batch;
    b.pairs[1].weight = w;
    return WeightedLoss(m, p, b, RngStream(), Eval(), false).loss;
  };
  const double fd = (loss_at(0.5 + h) - loss_at(0.5 - h)) / (2 * h);
  EXPECT_NEAR(fd, PairNll(m, p, batch.pairs[1]) / 5.0, 1e-9);
}

TEST(WeightedLoss, ZeroWeightPairContributesNothing) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 4);
  WeightedBatch a{{Pair({4, 5}, {6, 7}), Pair({8, 9}, {4, 5, 6}, 0.0)}};
  WeightedBatch b = a;
  b.pairs[1].target = {9, 9, 8};
  b.pairs[1].source = {5, 7};
  WeightedLossOptions o;
  const auto ra = WeightedLoss(m, p, a, RngStream(1, 1), o, true);
  const auto rb = WeightedLoss(m, p, b, RngStream(1, 1), o, true);
  EXPECT_EQ(ra.loss, rb.loss);
  for (std::size_t k = 0; k < ra.gradients.size(); ++k) EXPECT_EQ(ra.gradients[k], rb.gradients[k]);
}

TEST(WeightedLoss, GradientMatchesFiniteDifferences) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  auto p = TransformerParams::Init(c, 5);
  WeightedBatch batch{{Pair({4, 5, 6}, {7, 8}, 0.6), Pair({9, 4}, {5, 6, 7}, 1.0)}};
  batch.pairs[0].word_confidence = std::vector<double>{0.3, 0.9, 0.5};
  const WeightedLossOptions o;  // dropout on, flags on
  const RngStream rng(2, 2);
  const auto r = WeightedLoss(m, p, batch, rng, o, true);
  RngStream pick(6, 6);
  double diff2 = 0, a2 = 0, n2 = 0;
  for (int i = 0; i < 40; ++i) {
    const std::size_t k = pick.Below(p.size()), j = pick.Below(p.tensors[k].size());
    const double orig = p.tensors[k][j], h = 1e-5;
    p.tensors[k][j] = orig + h;
    const double up = WeightedLoss(m, p, batch, rng, o, false).loss;
    p.tensors[k][j] = orig - h;
    const double down = WeightedLoss(m, p, batch, rng, o, false).loss;
    p.tensors[k][j] = orig;
    const double num = (up - down) / (2 * h), a = r.gradients[k][j];
    diff2 += (a - num) * (a - num);
    a2 += a * a;
    n2 += num * num;
  }
  EXPECT_LT(std::sqrt(diff2) / (std::sqrt(a2) + std::sqrt(n2)), 1e-4);
}

TEST(WeightedLoss, ThreadCountDoesNotChangeResult) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 6);
  WeightedBatch batch;
  for (int i = 0; i < 11; ++i) batch.pairs.push_back(Pair({4 + i % 5, 5, 6}, {7, 8 - i % 3}, 0.1 * (i % 10)));
  WeightedLossOptions o;
  const auto a = WeightedLoss(m, p, batch, RngStream(3, 3), o, true);
  o.threads = 4;
  const auto b = WeightedLoss(m, p, batch, RngStream(3, 3), o, true);
  EXPECT_EQ(a.loss, b.loss);
  for (std::size_t k = 0; k < a.gradients.size(); ++k) EXPECT_EQ(a.gradients[k], b.gradients[k]);
}

TEST(WeightedLoss, RejectsBadWeights) {
  const ModelConfig c = SmallConfig();
  const Transformer m(c);
  const auto p = TransformerParams::Init(c, 7);
  for (double w : {-0.1, 1.5, std::numeric_limits<double>::quiet_NaN()}) {
    WeightedBatch b{{Pair({4}, {5}, w)}};
    EXPECT_THROW(WeightedLoss(m, p, b, RngStream(), {}, false), Error);
  }
  WeightedBatch b{{Pair({4, 5}, {5})}};
  b.pairs[0].word_confidence = std::vector<double>{1.0};
  EXPECT_THROW(WeightedLoss(m, p, b, RngStream(), {}, false), Error);
}

std::vector<ParallelPair> Authentic(std::size_t n) {
  std::vector<ParallelPair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({{4 + int(i % 6)}, {4 + int(i % 5), 5}});
  return out;
}

std::vector<SyntheticPair> Synthetic(std::size_t n) {
  std::vector<SyntheticPair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"s" + std::to_string(i), {4 + int(i % 3), 6}, {7}, {}, false});
  return out;
}

TEST(Mix, NoSyntheticEqualsAuthentic) {
  MixConfig cfg;
  cfg.synthetic_ratio = 0.0;
  const MixedCorpus mc(Authentic(20), Synthetic(30), nullptr, cfg);
  const auto e = mc.Epoch(0);
  EXPECT_EQ(e.size(), 20u);
  for (const auto& p : e) {
    EXPECT_FALSE(p.synthetic);
    EXPECT_EQ(p.weight, 1.0);
  }
}

TEST(Mix, OneToOneCounts) {
  const MixedCorpus mc(Authentic(100), Synthetic(100), nullptr, {});
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    const auto e = mc.Epoch(epoch);
    std::size_t syn = 0;
    for (const auto& p : e) syn += p.synthetic;
    EXPECT_EQ(e.size(), 200u);
    EXPECT_EQ(syn, 100u);
  }
  MixConfig two;
  two.synthetic_ratio = 2.0;
  EXPECT_EQ(MixedCorpus(Authentic(10), Synthetic(7), nullptr, two).Epoch(0).size(), 30u);
}

TEST(Mix, SeededShuffleReproducible) {
  MixConfig cfg;
  cfg.seed = 9;
  const MixedCorpus a(Authentic(30), Synthetic(30), nullptr, cfg);
  const MixedCorpus b(Authentic(30), Synthetic(30), nullptr, cfg);
  const auto ea = a.Epoch(1), eb = b.Epoch(1);
  ASSERT_EQ(ea.size(), eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    EXPECT_EQ(ea[i].source, eb[i].source);
    EXPECT_EQ(ea[i].target, eb[i].target);
  }
  const auto e0 = a.Epoch(0);
  bool differs = false;
  for (std::size_t i = 0; i < ea.size(); ++i) differs |= e0[i].source != ea[i].source;
  EXPECT_TRUE(differs);
}

TEST(Mix, AttachesConfidencesAndRequiresRecords) {
  auto syn = Synthetic(4);
  syn.push_back({"empty", {}, {7}, {}, false});
  std::unordered_map<std::string, ConfidenceRecord> recs;
  for (const auto& s : syn)
    if (!s.source.empty())
      recs[s.pair_id] = ConfidenceRecord{s.pair_id, Measure::kCev, 2, 2, 0.25, {0.5, 0.75}, {}};
  MixConfig cfg;
  cfg.use_sentence_confidence = cfg.use_word_confidence = true;
  cfg.synthetic_ratio = 0.5;
  const MixedCorpus mc(Authentic(8), syn, &recs, cfg);
  EXPECT_EQ(mc.dropped_empty(), 1u);
  EXPECT_EQ(mc.synthetic_size(), 4u);
  for (const auto& p : mc.Epoch(0)) {
    ASSERT_TRUE(p.word_confidence);
    if (p.synthetic) {
      EXPECT_EQ(p.weight, 0.25);
      EXPECT_EQ(*p.word_confidence, (std::vector<double>{0.5, 0.75}));
    } else {
      EXPECT_EQ(p.weight, 1.0);
      EXPECT_EQ(*p.word_confidence, std::vector<double>(p.source.size(), 1.0));
    }
  }
  recs.erase("s2");
  EXPECT_THROW(MixedCorpus(Authentic(8), syn, &recs, cfg), Error);
  EXPECT_THROW(MixedCorpus(Authentic(8), syn, nullptr, cfg), Error);
}

std::vector<WeightedPair> TinyCorpus() {
  std::vector<WeightedPair> out;
  for (int i = 0; i < 24; ++i) out.push_back(Pair({4 + i % 6, 4 + (i / 6) % 6}, {4 + (i / 6) % 6, 4 + i % 6}));
  return out;
}

TrainingConfig QuickTraining() {
  TrainingConfig t;
  t.max_steps = 12;
  t.batch_tokens = 24;
  t.warmup_steps = 4;
  t.seed = 3;
  return t;
}

TEST(TrainMle, ZeroStepsReturnsInitialization) {
  TrainingConfig t = QuickTraining();
  t.max_steps = 0;
  const auto r = TrainMle(TinyCorpus(), SmallConfig(), t);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_EQ(r.checkpoint.params, TransformerParams::Init(SmallConfig(), t.seed));
}

TEST(TrainMle, DeterministicAcrossRunsAndThreads) {
  TrainingConfig t = QuickTraining();
  const auto a = TrainMle(TinyCorpus(), SmallConfig(), t);
  t.threads = 3;
  const auto b = TrainMle(TinyCorpus(), SmallConfig(), t);
  EXPECT_EQ(a.checkpoint.Serialize(), b.checkpoint.Serialize());
  ASSERT_EQ(a.log.size(), 12u);
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].loss, b.log[i].loss);
  EXPECT_NE(a.checkpoint.params, TransformerParams::Init(SmallConfig(), t.seed));
  EXPECT_LT(a.log.back().loss, a.log.front().loss);
}

TEST(TrainMle, UnitConfidencesReproduceBaselineTrajectory) {
  TrainingConfig base = QuickTraining();
  auto corpus = TinyCorpus();
  const auto baseline = TrainMle(corpus, SmallConfig(), base);
  for (auto& p : corpus) p.word_confidence = std::vector<double>(p.source.size(), 1.0);
  TrainingConfig flags = base;
  flags.use_sentence_confidence = flags.use_word_confidence = true;
  const auto weighted = TrainMle(corpus, SmallConfig(), flags);
  ASSERT_EQ(weighted.log.size(), baseline.log.size());
  for (std::size_t i = 0; i < baseline.log.size(); ++i) EXPECT_EQ(weighted.log[i].loss, baseline.log[i].loss);
  EXPECT_EQ(weighted.checkpoint.params, baseline.checkpoint.params);
}

TEST(TrainMle, DivergenceReturnsLastGoodParameters) {
  TrainingConfig t = QuickTraining();
  TrainHooks hooks;
  auto bad = TransformerParams::Init(SmallConfig(), 1);
  bad.tensors.back()[0] = std::numeric_limits<double>::quiet_NaN();
  hooks.init = bad;
  const auto r = TrainMle(TinyCorpus(), SmallConfig(), t, hooks);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_TRUE(r.checkpoint.metadata["diverged"].get<bool>());
}

TEST(TrainMle, WritesLogAndCheckpoints) {
  const auto dir = std::filesystem::temp_directory_path() / "confbt_train_test";
  std::filesystem::remove_all(dir);
  TrainingConfig t = QuickTraining();
  t.checkpoint_every = 5;
  TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  hooks.log_path = dir / "train.csv";
  const auto r = TrainMle(TinyCorpus(), SmallConfig(), t, hooks);
  const auto lines = ReadLines(dir / "train.csv");
  ASSERT_EQ(lines.size(), 13u);
  EXPECT_EQ(lines[0], "step,loss,lr");
  EXPECT_EQ(lines[1].rfind("1,", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "step_5.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "step_10.ckpt"));
  EXPECT_EQ(ModelCheckpoint::Load(dir / "step_10.ckpt").metadata["step"], 10);
  EXPECT_EQ(TrainLogCsv(r.log).substr(0, 13), "step,loss,lr\n");
  std::filesystem::remove_all(dir);
}

TEST(TrainingConfig, JsonRoundTrip) {
  TrainingConfig t = QuickTraining();
  t.dropout = 0.2;
  t.use_word_confidence = true;
  const nlohmann::json j = t;
  EXPECT_EQ(nlohmann::json(j.get<TrainingConfig>()), j);
  TrainingConfig bad;
  bad.batch_tokens = 0;
  EXPECT_THROW(bad.Validate(), Error);
}

}  // namespace
}  // namespace confbt
