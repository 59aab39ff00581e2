// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numeric>
#include <unordered_map>
#include <vector>

#include "confbt/confidence/scoring.hpp"
#include "confbt/numerics/rng.hpp"
#include "confbt/training/weighted_loss.hpp"

namespace confbt {

struct ParallelPair {
  TokenIds source;
  TokenIds target;
};

struct MixConfig {
  /// authentic : synthetic. A zero synthetic part trains on authentic data only.
  double authentic_ratio = 1.0;
  double synthetic_ratio = 1.0;
  bool use_sentence_confidence = false;
  bool use_word_confidence = false;
  std::uint64_t seed = 0;
};

/// The seed is assigned by the caller and is not serialized.
inline void to_json(nlohmann::json& j, const MixConfig& c) {
  j = nlohmann::json{{"authentic_ratio", c.authentic_ratio},
                     {"synthetic_ratio", c.synthetic_ratio},
                     {"use_sentence_confidence", c.use_sentence_confidence},
                     {"use_word_confidence", c.use_word_confidence}};
}

inline void from_json(const nlohmann::json& j, MixConfig& c) {
  c.authentic_ratio = j.at("authentic_ratio").get<double>();
  c.synthetic_ratio = j.at("synthetic_ratio").get<double>();
  c.use_sentence_confidence = j.at("use_sentence_confidence").get<bool>();
  c.use_word_confidence = j.at("use_word_confidence").get<bool>();
}

/// Authentic plus confidence-weighted synthetic pairs, drawn per epoch.
///
/// Each epoch holds every authentic pair and round(|A| * s / a) synthetic
/// pairs taken cyclically from a fixed shuffled order of the synthetic
/// corpus, all shuffled together.
class MixedCorpus {
 public:
  MixedCorpus(std::vector<ParallelPair> authentic, const std::vector<SyntheticPair>& synthetic,
              const std::unordered_map<std::string, ConfidenceRecord>* records, const MixConfig& cfg)
      : cfg_(cfg) {
    if (!(cfg.authentic_ratio > 0.0) || cfg.synthetic_ratio < 0.0) {
      Fail(ErrorKind::kConfig, "mixing ratio must be positive:non-negative, got ", cfg.authentic_ratio,
           ":", cfg.synthetic_ratio);
    }
    const bool need_records = cfg.use_sentence_confidence || cfg.use_word_confidence;
    for (auto& p : authentic) {
      WeightedPair w{std::move(p.source), std::move(p.target), 1.0, std::nullopt, false};
      if (cfg.use_word_confidence) w.word_confidence = std::vector<double>(w.source.size(), 1.0);
      authentic_.push_back(std::move(w));
    }
    for (const auto& s : synthetic) {
      if (s.source.empty()) {
        ++dropped_empty_;
        continue;
      }
      WeightedPair w{s.source, s.target, 1.0, std::nullopt, true};
      if (need_records) {
        const ConfidenceRecord* rec = nullptr;
        if (records) {
          auto it = records->find(s.pair_id);
          if (it != records->end()) rec = &it->second;
        }
        if (!rec) Fail(ErrorKind::kState, "synthetic pair ", s.pair_id, " has no confidence record");
        if (cfg.use_sentence_confidence) w.weight = rec->sentence_confidence;
        if (cfg.use_word_confidence) {
          if (rec->word_confidences.size() != s.source.size()) {
            Fail(ErrorKind::kDimension, "confidence record ", s.pair_id, " has ",
                 rec->word_confidences.size(), " word values for ", s.source.size(), " tokens");
          }
          w.word_confidence = rec->word_confidences;
        }
      }
      synthetic_.push_back(std::move(w));
    }
    order_.resize(synthetic_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    RngStream rng(cfg.seed, 0x313);
    Shuffle(order_, rng);
    synthetic_per_epoch_ =
        synthetic_.empty() || cfg.synthetic_ratio == 0.0
            ? 0
            : static_cast<std::size_t>(std::llround(static_cast<double>(authentic_.size()) *
                                                    cfg.synthetic_ratio / cfg.authentic_ratio));
  }

  std::size_t authentic_size() const { return authentic_.size(); }
  std::size_t synthetic_size() const { return synthetic_.size(); }
  std::size_t synthetic_per_epoch() const { return synthetic_per_epoch_; }
  std::size_t dropped_empty() const { return dropped_empty_; }

  std::vector<WeightedPair> Epoch(std::size_t epoch) const {
    std::vector<WeightedPair> out = authentic_;
    for (std::size_t i = 0; i < synthetic_per_epoch_; ++i) {
      out.push_back(synthetic_[order_[(epoch * synthetic_per_epoch_ + i) % order_.size()]]);
    }
    RngStream rng = RngStream(cfg_.seed, 0x314).Substream(epoch);
    Shuffle(out, rng);
    return out;
  }

 private:
  MixConfig cfg_;
  std::vector<WeightedPair> authentic_;
  std::vector<WeightedPair> synthetic_;
  std::vector<std::size_t> order_;
  std::size_t synthetic_per_epoch_ = 0;
  std::size_t dropped_empty_ = 0;
};

}  // namespace confbt
