// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/data/batching.hpp"
#include "confbt/model/checkpoint.hpp"
#include "confbt/numerics/adam.hpp"
#include "confbt/training/weighted_loss.hpp"

namespace confbt {

struct TrainingConfig {
  double lr_scale = 1.0;
  std::uint64_t warmup_steps = 200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-9;
  /// Override the model's values when set.
  std::optional<double> label_smoothing;
  std::optional<double> dropout;
  std::size_t batch_tokens = 1024;
  std::size_t max_steps = 1000;
  std::size_t max_epochs = 0;  // 0: bounded by max_steps only
  std::uint64_t seed = 1;
  bool use_sentence_confidence = false;
  bool use_word_confidence = false;
  std::size_t checkpoint_every = 0;  // 0: no intermediate checkpoints
  std::size_t shards = 8;
  std::size_t threads = 1;

  void Validate() const {
    if (batch_tokens == 0) Fail(ErrorKind::kConfig, "batch token budget must be > 0");
    if (!(lr_scale > 0.0)) Fail(ErrorKind::kConfig, "lr_scale must be > 0");
    if (shards == 0) Fail(ErrorKind::kConfig, "shards must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"lr_scale", c.lr_scale},
                     {"warmup_steps", c.warmup_steps},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_epsilon", c.adam_epsilon},
                     {"batch_tokens", c.batch_tokens},
                     {"max_steps", c.max_steps},
                     {"max_epochs", c.max_epochs},
                     {"seed", c.seed},
                     {"use_sentence_confidence", c.use_sentence_confidence},
                     {"use_word_confidence", c.use_word_confidence},
                     {"checkpoint_every", c.checkpoint_every},
                     {"shards", c.shards}};
  j["label_smoothing"] = c.label_smoothing ? nlohmann::json(*c.label_smoothing) : nlohmann::json(nullptr);
  j["dropout"] = c.dropout ? nlohmann::json(*c.dropout) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
  const TrainingConfig d;
  c.lr_scale = j.value("lr_scale", d.lr_scale);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
  c.batch_tokens = j.value("batch_tokens", d.batch_tokens);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.seed = j.value("seed", d.seed);
  c.use_sentence_confidence = j.value("use_sentence_confidence", d.use_sentence_confidence);
  c.use_word_confidence = j.value("use_word_confidence", d.use_word_confidence);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.shards = j.value("shards", d.shards);
  c.label_smoothing.reset();
  c.dropout.reset();
  if (j.contains("label_smoothing") && !j["label_smoothing"].is_null()) c.label_smoothing = j["label_smoothing"].get<double>();
  if (j.contains("dropout") && !j["dropout"].is_null()) c.dropout = j["dropout"].get<double>();
}

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  ModelCheckpoint checkpoint;
  std::vector<TrainLogEntry> log;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  bool diverged = false;
};

inline std::string TrainLogCsv(const std::vector<TrainLogEntry>& log) {
  std::ostringstream os;
  os.precision(17);
  os << "step,loss,lr\n";
  for (const auto& e : log) os << e.step << ',' << e.loss << ',' << e.lr << '\n';
  return os.str();
}

/// Training data for epoch e (0-based).
using EpochSource = std::function<std::vector<WeightedPair>(std::size_t epoch)>;

struct TrainHooks {
  /// Directory for intermediate checkpoints (checkpoint_every > 0).
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Written after every step when set.
  std::optional<std::filesystem::path> log_path;
  /// Start from these parameters instead of a fresh initialization.
  std::optional<TransformerParams> init;
  std::string src_vocab_hash;
  std::string tgt_vocab_hash;
};

/// Adam training of the (weighted) smoothed NLL. Each epoch's pairs are
/// grouped by BatchByTokens and the batches visited in a seeded random
/// order, one optimizer step per batch. Step s uses dropout stream
/// RngStream(seed, 1).Substream(s). A non-finite loss or gradient stops
/// training and returns the parameters from before that step.
inline TrainResult TrainMle(const EpochSource& data, ModelConfig model_config, const TrainingConfig& cfg,
                            const TrainHooks& hooks = {}) {
  cfg.Validate();
  if (cfg.label_smoothing) model_config.label_smoothing = *cfg.label_smoothing;
  if (cfg.dropout) model_config.dropout = *cfg.dropout;
  model_config.Validate();
  const Transformer model(model_config);
  TrainResult result;
  TransformerParams params = hooks.init ? *hooks.init : TransformerParams::Init(model_config, cfg.seed);
  if (params.names != model.layout().names) Fail(ErrorKind::kConfig, "initial parameters do not match the model config");
  AdamState adam;
  adam.beta1 = cfg.adam_beta1;
  adam.beta2 = cfg.adam_beta2;
  adam.epsilon = cfg.adam_epsilon;
  const LearningRateSchedule schedule{cfg.lr_scale, model_config.d_model, cfg.warmup_steps};
  WeightedLossOptions lopt;
  lopt.use_sentence_weights = cfg.use_sentence_confidence;
  lopt.use_word_confidence = cfg.use_word_confidence;
  lopt.shards = cfg.shards;
  lopt.threads = cfg.threads;
  const RngStream dropout_root(cfg.seed, 1);
  const RngStream order_root(cfg.seed, 2);

  auto make_checkpoint = [&](const TransformerParams& p, std::size_t step) {
    ModelCheckpoint ck;
    ck.config = model_config;
    ck.src_vocab_hash = hooks.src_vocab_hash;
    ck.tgt_vocab_hash = hooks.tgt_vocab_hash;
    ck.params = p;
    ck.metadata = {{"step", step}, {"training", cfg}};
    return ck;
  };
  std::ofstream log_file;
  if (hooks.log_path) {
    if (hooks.log_path->has_parent_path()) std::filesystem::create_directories(hooks.log_path->parent_path());
    log_file.open(*hooks.log_path, std::ios::trunc);
    if (!log_file) Fail(ErrorKind::kIo, "cannot write ", hooks.log_path->string());
    log_file.precision(17);
    log_file << "step,loss,lr\n";
  }
  auto log_step = [&](const TrainLogEntry& e) {
    result.log.push_back(e);
    if (log_file.is_open()) log_file << e.step << ',' << e.loss << ',' << e.lr << '\n' << std::flush;
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; step < cfg.max_steps && (cfg.max_epochs == 0 || epoch < cfg.max_epochs);
       ++epoch) {
    std::vector<WeightedPair> pairs = data(epoch);
    if (pairs.empty()) Fail(ErrorKind::kValue, "train_mle: empty training corpus");
    std::vector<PairLength> lengths;
    lengths.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (pairs[i].source.empty() || pairs[i].target.empty()) {
        Fail(ErrorKind::kLength, "training pair ", i, " of epoch ", epoch, " has an empty side");
      }
      lengths.push_back({pairs[i].source.size() + 1, pairs[i].target.size() + 1});
    }
    auto batches = BatchByTokens(lengths, cfg.batch_tokens);
    RngStream order_rng = order_root.Substream(epoch);
    Shuffle(batches, order_rng);
    result.epochs = epoch + 1;
    for (const auto& idx : batches) {
      if (step >= cfg.max_steps) break;
      WeightedBatch batch;
      batch.pairs.reserve(idx.size());
      for (std::size_t i : idx) batch.pairs.push_back(pairs[i]);
      auto r = WeightedLoss(model, params, batch, dropout_root.Substream(step), lopt, true);
      bool finite = std::isfinite(r.loss);
      for (const auto& g : r.gradients) finite = finite && g.AllFinite();
      if (!finite) {
        result.diverged = true;
        log_step({step + 1, r.loss, 0.0});
        result.checkpoint = make_checkpoint(params, step);
        result.checkpoint.metadata["diverged"] = true;
        result.steps = step;
        return result;
      }
      const double lr = AdamStep(std::span<Tensor>(params.tensors),
                                 std::span<const Tensor>(r.gradients), adam, schedule);
      ++step;
      log_step({step, r.loss, lr});
      if (cfg.checkpoint_every > 0 && hooks.checkpoint_dir && step % cfg.checkpoint_every == 0) {
        make_checkpoint(params, step).Save(*hooks.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt"));
      }
    }
  }
  result.steps = step;
  result.checkpoint = make_checkpoint(params, step);
  return result;
}

/// Fixed corpus for every epoch.
inline TrainResult TrainMle(const std::vector<WeightedPair>& corpus, const ModelConfig& model_config,
                            const TrainingConfig& cfg, const TrainHooks& hooks = {}) {
  if (corpus.empty()) Fail(ErrorKind::kValue, "train_mle: empty training corpus");
  return TrainMle([&corpus](std::size_t) { return corpus; }, model_config, cfg, hooks);
}

}  // namespace confbt
