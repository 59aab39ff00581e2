// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "confbt/confidence/measures.hpp"
#include "confbt/util/jsonl.hpp"
#include "confbt/util/parallel.hpp"

namespace confbt {

/// One back-translated pair: `source` is the predicted x̂ and `target` the
/// monolingual sentence y it was generated from (both as token ids).
struct SyntheticPair {
  std::string pair_id;
  TokenIds source;
  TokenIds target;
  std::vector<double> step_logprobs;  // decoding-time, may be empty
  bool truncated = false;
};

inline void to_json(nlohmann::json& j, const SyntheticPair& p) {
  j = nlohmann::json{{"pair_id", p.pair_id},
                     {"source", p.source},
                     {"target", p.target},
                     {"step_logprobs", p.step_logprobs},
                     {"truncated", p.truncated}};
}

inline void from_json(const nlohmann::json& j, SyntheticPair& p) {
  p.pair_id = j.at("pair_id").get<std::string>();
  p.source = j.at("source").get<TokenIds>();
  p.target = j.at("target").get<TokenIds>();
  p.step_logprobs = j.at("step_logprobs").get<std::vector<double>>();
  p.truncated = j.at("truncated").get<bool>();
}

struct ScoringConfig {
  MeasureConfig measure;
  McOptions mc;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t chunk = 64;  // pairs scored between file appends
  std::optional<std::filesystem::path> dump_path;
};

/// 64-bit FNV-1a, used to give every pair id its own RNG stream.
inline std::uint64_t Fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct ScoredPair {
  ConfidenceRecord record;
  std::optional<nlohmann::json> dump;
};

/// Scores one pair with the reverse model (which maps y to x̂). Word-level
/// confidences cover the |x̂| predicted tokens; the sentence value also
/// includes the end-of-sentence step.
inline ScoredPair ScorePair(const Transformer& reverse, const TransformerParams& params,
                            const SyntheticPair& pair, const ScoringConfig& cfg) {
  ScoredPair out;
  ConfidenceRecord& r = out.record;
  r.pair_id = pair.pair_id;
  r.measure = cfg.measure.kind;
  r.alpha = cfg.measure.alpha;
  r.beta = cfg.measure.beta;
  if (pair.source.empty()) {
    r.sentence_confidence = 0.0;
    r.flags.push_back(kFlagEmptyPrediction);
    return out;
  }
  RngStream unused;
  const auto det = reverse.ForwardLogprobs(params, pair.target, pair.source, unused, {});
  const auto ptp = PtpConfidence(det, cfg.mc.length_normalized);
  ConfidenceValues values;
  if (cfg.measure.kind == Measure::kPtp) {
    values = ptp;
  } else {
    McOptions mc = cfg.mc;
    mc.threads = 1;
    const RngStream rng(cfg.seed, Fnv1a64(pair.pair_id));
    const auto samples = McForward(reverse, params, pair.target, pair.source, mc, rng);
    const auto stats = Variance(samples);
    values = MeasureFromStats(stats, cfg.measure);
    if (cfg.dump_path) out.dump = ScoreDumpRecord(pair.pair_id, samples, stats, ptp.sentence);
  }
  r.sentence_confidence = values.sentence;
  r.word_confidences.assign(values.words.begin(), values.words.begin() + static_cast<long>(pair.source.size()));
  r.flags = values.flags;
  return out;
}

/// Scores every pair and streams records to `out_path` (JSON-lines). Records
/// already present in `out_path` are kept and their pairs skipped, so an
/// interrupted run resumes where it stopped. Returns records in pair order.
inline std::vector<ConfidenceRecord> ScoreCorpus(const Transformer& reverse,
                                                 const TransformerParams& params,
                                                 const std::vector<SyntheticPair>& pairs,
                                                 const ScoringConfig& cfg,
                                                 const std::filesystem::path& out_path) {
  cfg.measure.Validate();
  if (cfg.measure.kind != Measure::kPtp && cfg.mc.k < 1) Fail(ErrorKind::kConfig, "K must be >= 1");
  std::unordered_map<std::string, ConfidenceRecord> done;
  if (std::filesystem::exists(out_path)) {
    for (const auto& j : ReadJsonLines(out_path)) {
      auto rec = j.get<ConfidenceRecord>();
      if (rec.measure != cfg.measure.kind || rec.alpha != cfg.measure.alpha || rec.beta != cfg.measure.beta) {
        Fail(ErrorKind::kState, "existing confidence file ", out_path.string(),
             " was written with a different measure configuration");
      }
      done.emplace(rec.pair_id, std::move(rec));
    }
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (!done.count(pairs[i].pair_id)) todo.push_back(i);

  JsonLinesWriter writer(out_path, true);
  std::optional<JsonLinesWriter> dump;
  if (cfg.dump_path && cfg.measure.kind != Measure::kPtp) dump.emplace(*cfg.dump_path, !done.empty());
  const std::size_t chunk = std::max<std::size_t>(cfg.chunk, 1);
  for (std::size_t start = 0; start < todo.size(); start += chunk) {
    const std::size_t n = std::min(chunk, todo.size() - start);
    std::vector<ScoredPair> scored(n);
    ParallelFor(n, cfg.threads, [&](std::size_t k) {
      scored[k] = ScorePair(reverse, params, pairs[todo[start + k]], cfg);
    });
    for (auto& s : scored) {
      writer.Write(s.record);
      if (dump && s.dump) dump->Write(*s.dump);
      done.emplace(s.record.pair_id, std::move(s.record));
    }
  }
  std::vector<ConfidenceRecord> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(done.at(p.pair_id));
  return out;
}

/// Reads a confidence file into a pair-id map.
inline std::unordered_map<std::string, ConfidenceRecord> LoadConfidenceRecords(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, ConfidenceRecord> out;
  for (const auto& j : ReadJsonLines(path)) {
    auto rec = j.get<ConfidenceRecord>();
    out[rec.pair_id] = std::move(rec);
  }
  return out;
}

}  // namespace confbt
