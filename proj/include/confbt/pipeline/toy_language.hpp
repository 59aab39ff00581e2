// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/data/text.hpp"
#include "confbt/numerics/rng.hpp"

namespace confbt {

/// A synthetic language pair with a fixed word-to-word mapping, Zipfian word
/// frequencies and two structural rules: modifiers (every fourth word) move
/// after the following word, and some words translate to two target words.
struct ToyLanguageConfig {
  std::size_t vocab_size = 40;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  double zipf_exponent = 1.0;
  /// Every n-th source word has a two-word translation; 0 disables.
  std::size_t fertility_every = 7;
  std::uint64_t seed = 0;
};

class ToyLanguage {
 public:
  explicit ToyLanguage(const ToyLanguageConfig& cfg) : cfg_(cfg) {
    if (cfg.vocab_size < 2 || cfg.min_len < 1 || cfg.max_len < cfg.min_len) {
      Fail(ErrorKind::kConfig, "toy language needs vocab >= 2 and 1 <= min_len <= max_len");
    }
    RngStream rng(cfg.seed, 0x70);
    source_words_ = MakeLexicon("ptkbdgf", "aeiou", cfg.vocab_size, rng);
    target_words_ = MakeLexicon("mnlrsvz", "aeiouy", cfg.vocab_size + cfg.vocab_size / 2 + 1, rng);
    double total = 0.0;
    for (std::size_t r = 0; r < cfg.vocab_size; ++r) {
      total += 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
      cdf_.push_back(total);
    }
    for (double& c : cdf_) c /= total;
  }

  const std::vector<std::string>& source_words() const { return source_words_; }

  Tokens SampleSource(RngStream& rng) const {
    const std::size_t len = cfg_.min_len + rng.Below(cfg_.max_len - cfg_.min_len + 1);
    Tokens out;
    for (std::size_t i = 0; i < len; ++i) {
      const double u = rng.Uniform();
      std::size_t r = 0;
      while (r + 1 < cdf_.size() && cdf_[r] <= u) ++r;
      out.push_back(source_words_[r]);
    }
    return out;
  }

  Tokens Translate(const Tokens& source) const {
    std::vector<std::size_t> ids;
    for (const auto& w : source) ids.push_back(IndexOf(w));
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      if (IsModifier(ids[i]) && !IsModifier(ids[i + 1])) {
        std::swap(ids[i], ids[i + 1]);
        ++i;
      }
    }
    Tokens out;
    for (std::size_t id : ids) {
      out.push_back(target_words_[id]);
      if (cfg_.fertility_every && id % cfg_.fertility_every == cfg_.fertility_every / 2) {
        out.push_back(target_words_[cfg_.vocab_size + id / 2]);
      }
    }
    return out;
  }

 private:
  static bool IsModifier(std::size_t id) { return id % 4 == 3; }

  std::size_t IndexOf(const std::string& w) const {
    for (std::size_t i = 0; i < source_words_.size(); ++i)
      if (source_words_[i] == w) return i;
    Fail(ErrorKind::kVocab, "'", w, "' is not a toy source word");
  }

  static std::vector<std::string> MakeLexicon(const std::string& consonants, const std::string& vowels,
                                              std::size_t n, RngStream& rng) {
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (out.size() < n) {
      const std::size_t syllables = 1 + rng.Below(3);
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += consonants[rng.Below(consonants.size())];
        w += vowels[rng.Below(vowels.size())];
      }
      if (seen.insert(w).second) out.push_back(w);
    }
    return out;
  }

  ToyLanguageConfig cfg_;
  std::vector<std::string> source_words_;
  std::vector<std::string> target_words_;
  std::vector<double> cdf_;
};

struct ToyCorpusSizes {
  std::size_t authentic = 200;
  std::size_t monolingual = 200;
  std::size_t test = 100;
  /// Source-side monolingual text for iterated rounds; 0 writes none.
  std::size_t source_monolingual = 0;
};

inline void to_json(nlohmann::json& j, const ToyLanguageConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size}, {"min_len", c.min_len},
                     {"max_len", c.max_len},       {"zipf_exponent", c.zipf_exponent},
                     {"fertility_every", c.fertility_every}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ToyLanguageConfig& c) {
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.min_len = j.at("min_len").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.zipf_exponent = j.at("zipf_exponent").get<double>();
  c.fertility_every = j.at("fertility_every").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ToyCorpusSizes& s) {
  j = nlohmann::json{{"authentic", s.authentic}, {"monolingual", s.monolingual}, {"test", s.test},
                     {"source_monolingual", s.source_monolingual}};
}

inline void from_json(const nlohmann::json& j, ToyCorpusSizes& s) {
  s.authentic = j.at("authentic").get<std::size_t>();
  s.monolingual = j.at("monolingual").get<std::size_t>();
  s.test = j.at("test").get<std::size_t>();
  s.source_monolingual = j.at("source_monolingual").get<std::size_t>();
}

/// Writes train.src/train.tgt, mono.tgt, test.src/test.tgt and optionally
/// mono.src. Each file draws sentences from its own stream.
inline void WriteToyCorpus(const ToyLanguage& lang, const ToyCorpusSizes& sizes, std::uint64_t seed,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto draw = [&](std::size_t n, std::uint64_t stream, std::vector<std::string>* src,
                  std::vector<std::string>* tgt) {
    RngStream rng(seed, stream);
    for (std::size_t i = 0; i < n; ++i) {
      const Tokens s = lang.SampleSource(rng);
      if (src) src->push_back(Join(s));
      if (tgt) tgt->push_back(Join(lang.Translate(s)));
    }
  };
  std::vector<std::string> ts, tt, ms, mt, es, et;
  draw(sizes.authentic, 1, &ts, &tt);
  draw(sizes.monolingual, 2, nullptr, &mt);
  draw(sizes.test, 3, &es, &et);
  draw(sizes.source_monolingual, 4, &ms, nullptr);
  WriteLines(dir / "train.src", ts);
  WriteLines(dir / "train.tgt", tt);
  WriteLines(dir / "mono.tgt", mt);
  WriteLines(dir / "test.src", es);
  WriteLines(dir / "test.tgt", et);
  if (sizes.source_monolingual) WriteLines(dir / "mono.src", ms);
}

}  // namespace confbt
