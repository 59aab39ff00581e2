// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/data/vocab.hpp"
#include "confbt/model/transformer.hpp"
#include "confbt/numerics/rng.hpp"

namespace confbt {

enum class DecodeMode { kGreedy, kBeam, kSample };

inline std::string ToString(DecodeMode m) {
  switch (m) {
    case DecodeMode::kGreedy: return "greedy";
    case DecodeMode::kBeam: return "search";
    case DecodeMode::kSample: return "sample";
  }
  return "search";
}

inline DecodeMode ParseDecodeMode(const std::string& s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "search" || s == "beam") return DecodeMode::kBeam;
  if (s == "sample") return DecodeMode::kSample;
  Fail(ErrorKind::kConfig, "unknown decode mode '", s, "' (expected greedy|search|sample)");
}

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kBeam;
  std::size_t beam_size = 4;
  /// Maximum generated symbols, </s> included.
  std::size_t max_len = 64;
  double length_penalty = 0.6;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  /// Sampling truncation; 0 and 1.0 disable them.
  std::size_t top_k = 0;
  double top_p = 1.0;

  void Validate() const {
    if (beam_size < 1) Fail(ErrorKind::kConfig, "beam size must be >= 1");
    if (!(temperature > 0.0)) Fail(ErrorKind::kConfig, "temperature must be > 0");
    if (max_len < 1) Fail(ErrorKind::kConfig, "max length must be >= 1");
    if (!(top_p > 0.0 && top_p <= 1.0)) Fail(ErrorKind::kConfig, "top_p must be in (0,1]");
    if (length_penalty < 0.0) Fail(ErrorKind::kConfig, "length penalty must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = nlohmann::json{{"mode", ToString(c.mode)},         {"beam_size", c.beam_size},
                     {"max_len", c.max_len},             {"length_penalty", c.length_penalty},
                     {"temperature", c.temperature},     {"seed", c.seed},
                     {"top_k", c.top_k},                 {"top_p", c.top_p}};
}

inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
  c.mode = ParseDecodeMode(j.at("mode").get<std::string>());
  c.beam_size = j.at("beam_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.length_penalty = j.at("length_penalty").get<double>();
  c.temperature = j.at("temperature").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.top_p = j.at("top_p").get<double>();
}

/// A decoded prediction. `step_logprobs` holds one model log-probability per
/// generated symbol: one per token, plus one for </s> unless truncated.
struct Hypothesis {
  TokenIds tokens;
  std::vector<double> step_logprobs;
  double logprob = 0.0;
  double score = 0.0;
  bool truncated = false;

  std::size_t num_symbols() const { return step_logprobs.size(); }
};

/// GNMT length penalty ((5 + n) / 6)^alpha.
inline double LengthPenalty(std::size_t n, double alpha) {
  if (alpha == 0.0) return 1.0;
  return std::pow((5.0 + static_cast<double>(n)) / 6.0, alpha);
}

/// Incremental inference wrapper around a model and its parameters.
class Decoder {
 public:
  Decoder(const Transformer& model, const TransformerParams& params)
      : model_(model), params_(params) {}

  const Transformer& model() const { return model_; }

  Tensor Encode(const TokenIds& src) const {
    Tape tape(false);
    ParamBinder p(tape, params_);
    RngStream unused;
    return model_.Encode(p, src, unused, ForwardOptions{}).value();
  }

  /// Log-distribution of the next symbol after `prefix`.
  std::vector<double> NextLogprobs(const Tensor& memory, const TokenIds& prefix) const {
    Tape tape(false);
    ParamBinder p(tape, params_);
    RngStream unused;
    TokenIds in;
    in.reserve(prefix.size() + 1);
    in.push_back(kBosId);
    in.insert(in.end(), prefix.begin(), prefix.end());
    const Tensor lp = model_.Decode(p, tape.Constant(memory), in, unused, ForwardOptions{}).value();
    const auto last = lp.row(lp.rows() - 1);
    return {last.begin(), last.end()};
  }

  static bool Decodable(int id) { return id != kPadId && id != kBosId && id != kUnkId; }

  Hypothesis Greedy(const TokenIds& src, std::size_t max_len) const {
    const Tensor memory = Encode(src);
    Hypothesis h;
    const std::size_t limit = EffectiveMaxLen(max_len);
    while (h.num_symbols() < limit) {
      const auto lp = NextLogprobs(memory, h.tokens);
      int best = -1;
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (!Decodable(static_cast<int>(v))) continue;
        if (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
      }
      h.step_logprobs.push_back(lp[static_cast<std::size_t>(best)]);
      h.logprob += lp[static_cast<std::size_t>(best)];
      if (best == kEosId) {
        h.score = h.logprob / LengthPenalty(h.num_symbols(), 0.0);
        return h;
      }
      h.tokens.push_back(best);
    }
    h.truncated = true;
    h.score = h.logprob;
    return h;
  }

  /// Beam search over log-probabilities. At each step the top `beam` scoring
  /// expansions are kept; those ending in </s> are finished. Final ranking
  /// uses logprob / LengthPenalty; ties go to the lexicographically smaller
  /// symbol sequence.
  Hypothesis Beam(const TokenIds& src, std::size_t beam, std::size_t max_len, double alpha) const {
    if (beam < 1) Fail(ErrorKind::kConfig, "beam size must be >= 1");
    const Tensor memory = Encode(src);
    const std::size_t limit = EffectiveMaxLen(max_len);
    struct Item {
      Hypothesis hyp;
      TokenIds symbols;  // tokens plus </s> when finished, for tie-breaking
    };
    auto better = [](double sa, const TokenIds& a, double sb, const TokenIds& b) {
      if (sa != sb) return sa > sb;
      return a < b;
    };
    std::vector<Item> alive(1);
    std::vector<Item> finished;
    const double best_lp_at_limit = LengthPenalty(limit, alpha);
    for (std::size_t step = 0; step < limit && !alive.empty(); ++step) {
      std::vector<Item> candidates;
      for (const Item& it : alive) {
        const auto lp = NextLogprobs(memory, it.hyp.tokens);
        for (std::size_t v = 0; v < lp.size(); ++v) {
          const int id = static_cast<int>(v);
          if (!Decodable(id)) continue;
          Item c = it;
          c.hyp.step_logprobs.push_back(lp[v]);
          c.hyp.logprob += lp[v];
          c.symbols.push_back(id);
          if (id != kEosId) c.hyp.tokens.push_back(id);
          candidates.push_back(std::move(c));
        }
      }
      std::sort(candidates.begin(), candidates.end(), [&](const Item& a, const Item& b) {
        return better(a.hyp.logprob, a.symbols, b.hyp.logprob, b.symbols);
      });
      alive.clear();
      for (std::size_t r = 0; r < candidates.size() && r < beam; ++r) {
        Item& c = candidates[r];
        if (c.symbols.back() == kEosId) {
          c.hyp.score = c.hyp.logprob / LengthPenalty(c.hyp.num_symbols(), alpha);
          finished.push_back(std::move(c));
        } else {
          alive.push_back(std::move(c));
        }
      }
      if (step + 1 == limit) {
        for (Item& a : alive) {
          a.hyp.truncated = true;
          a.hyp.score = a.hyp.logprob / LengthPenalty(a.hyp.num_symbols(), alpha);
          finished.push_back(std::move(a));
        }
        alive.clear();
      }
      if (!finished.empty() && !alive.empty()) {
        double best_finished = -std::numeric_limits<double>::infinity();
        for (const Item& f : finished) best_finished = std::max(best_finished, f.hyp.score);
        double bound = -std::numeric_limits<double>::infinity();
        for (const Item& a : alive) bound = std::max(bound, a.hyp.logprob / best_lp_at_limit);
        if (best_finished > bound) break;
      }
    }
    const Item* best = nullptr;
    for (const Item& f : finished) {
      if (!best || better(f.hyp.score, f.symbols, best->hyp.score, best->symbols)) best = &f;
    }
    return best->hyp;
  }

  /// Ancestral sampling from softmax(logprobs / temperature). Recorded
  /// step log-probabilities are the model's (temperature 1).
  Hypothesis Sample(const TokenIds& src, const DecodeConfig& cfg, RngStream& rng) const {
    cfg.Validate();
    const Tensor memory = Encode(src);
    Hypothesis h;
    const std::size_t limit = EffectiveMaxLen(cfg.max_len);
    while (h.num_symbols() < limit) {
      const auto lp = NextLogprobs(memory, h.tokens);
      const int id = SampleIndex(lp, cfg, rng);
      h.step_logprobs.push_back(lp[static_cast<std::size_t>(id)]);
      h.logprob += lp[static_cast<std::size_t>(id)];
      if (id == kEosId) {
        h.score = h.logprob;
        return h;
      }
      h.tokens.push_back(id);
    }
    h.truncated = true;
    h.score = h.logprob;
    return h;
  }

  Hypothesis Run(const TokenIds& src, const DecodeConfig& cfg, RngStream& rng) const {
    cfg.Validate();
    switch (cfg.mode) {
      case DecodeMode::kGreedy: return Greedy(src, cfg.max_len);
      case DecodeMode::kBeam: return Beam(src, cfg.beam_size, cfg.max_len, cfg.length_penalty);
      case DecodeMode::kSample: return Sample(src, cfg, rng);
    }
    return Greedy(src, cfg.max_len);
  }

 private:
  std::size_t EffectiveMaxLen(std::size_t requested) const {
    // Keeps room for </s>, so any output, truncated or not, can be fed back
    // to a model of the same max_len as a source or teacher-forced target.
    const std::size_t cap = model_.config().max_len > 1 ? model_.config().max_len - 1 : 1;
    return std::max<std::size_t>(1, std::min(requested, cap));
  }

  static int SampleIndex(const std::vector<double>& lp, const DecodeConfig& cfg, RngStream& rng) {
    std::vector<int> ids;
    for (std::size_t v = 0; v < lp.size(); ++v)
      if (Decodable(static_cast<int>(v))) ids.push_back(static_cast<int>(v));
    std::vector<double> scaled(ids.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      scaled[i] = lp[static_cast<std::size_t>(ids[i])] / cfg.temperature;
      mx = std::max(mx, scaled[i]);
    }
    std::vector<double> p(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) p[i] = std::exp(scaled[i] - mx);
    if (cfg.top_k > 0 || cfg.top_p < 1.0) Truncate(p, cfg);
    double total = 0.0;
    for (double v : p) total += v;
    const double u = rng.Uniform() * total;
    double acc = 0.0;
    int last_nonzero = ids.front();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (p[i] <= 0.0) continue;
      acc += p[i];
      last_nonzero = ids[i];
      if (u < acc) return ids[i];
    }
    return last_nonzero;
  }

  static void Truncate(std::vector<double>& p, const DecodeConfig& cfg) {
    std::vector<std::size_t> order(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    double total = 0.0;
    for (double v : p) total += v;
    double kept = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const bool over_k = cfg.top_k > 0 && r >= cfg.top_k;
      const bool over_p = cfg.top_p < 1.0 && kept >= cfg.top_p * total;
      if (over_k || over_p) p[order[r]] = 0.0;
      else kept += p[order[r]];
    }
  }

  const Transformer& model_;
  const TransformerParams& params_;
};

}  // namespace confbt
