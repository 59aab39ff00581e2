// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "confbt/data/text.hpp"
#include "confbt/util/error.hpp"
#include "confbt/util/hash.hpp"

namespace confbt {

/// Byte-pair-encoding merges learned greedily by pair frequency.
///
/// Words are split into UTF-8 characters with the end-of-word marker glued
/// to the last character. Segmented output marks every non-final subword
/// with the continuation suffix, so undo is a plain string operation.
class BpeModel {
 public:
  static constexpr int kFormatVersion = 1;
  using Merge = std::pair<std::string, std::string>;

  std::string end_marker = "</w>";
  std::string continuation = "@@";

  const std::vector<Merge>& merges() const { return merges_; }
  std::size_t num_merges() const { return merges_.size(); }

  /// Learns up to `num_merges` merges. Each step merges the most frequent
  /// adjacent pair (ties: lexicographically smallest pair); learning stops
  /// early when no pair reaches `min_frequency`.
  static BpeModel Learn(const std::vector<Tokens>& corpus, std::size_t num_merges,
                        std::size_t min_frequency = 2) {
    std::map<std::string, std::size_t> word_counts;
    std::size_t words = 0;
    for (const auto& sent : corpus)
      for (const auto& w : sent) {
        ++word_counts[w];
        ++words;
      }
    if (words == 0) Fail(ErrorKind::kValue, "learn_bpe: empty corpus");
    BpeModel model;
    std::vector<std::pair<std::vector<std::string>, std::size_t>> vocab;
    for (const auto& [w, n] : word_counts) vocab.emplace_back(model.Symbols(w), n);
    for (std::size_t step = 0; step < num_merges; ++step) {
      std::map<Merge, std::size_t> pairs;
      for (const auto& [syms, n] : vocab)
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += n;
      const Merge* best = nullptr;
      std::size_t best_n = 0;
      for (const auto& [p, n] : pairs) {
        if (n > best_n) {  // map order makes the first maximum the smallest pair
          best = &p;
          best_n = n;
        }
      }
      if (!best || best_n < std::max<std::size_t>(min_frequency, 1)) break;
      const Merge m = *best;
      for (auto& [syms, n] : vocab) MergeAll(syms, m);
      model.merges_.push_back(m);
    }
    model.RebuildRanks();
    return model;
  }

  /// Segments pre-tokenized words into subword tokens.
  Tokens Apply(const Tokens& words) const {
    Tokens out;
    for (const auto& w : words) {
      const Tokens seg = SegmentWord(w);
      out.insert(out.end(), seg.begin(), seg.end());
    }
    return out;
  }

  /// Left inverse of Apply.
  Tokens Undo(const Tokens& subwords) const {
    Tokens out;
    std::string cur;
    for (const auto& t : subwords) {
      if (EndsWith(t, continuation)) {
        cur += t.substr(0, t.size() - continuation.size());
      } else {
        cur += t;
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  std::string Serialize() const {
    std::ostringstream os;
    os << "#version: confbt-bpe " << kFormatVersion << " end_marker=" << end_marker
       << " continuation=" << continuation << '\n';
    for (const auto& [a, b] : merges_) os << a << ' ' << b << '\n';
    return os.str();
  }

  static BpeModel Deserialize(const std::string& text) {
    std::istringstream is(text);
    std::string header;
    if (!std::getline(is, header) || header.rfind("#version: confbt-bpe ", 0) != 0) {
      Fail(ErrorKind::kFormat, "missing BPE header");
    }
    BpeModel m;
    std::istringstream hs(header.substr(std::string("#version: confbt-bpe ").size()));
    int version = 0;
    hs >> version;
    if (version != kFormatVersion) Fail(ErrorKind::kFormat, "unsupported BPE version ", version);
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "end_marker") m.end_marker = val;
      if (key == "continuation") m.continuation = val;
    }
    std::string line;
    std::size_t n = 1;
    while (std::getline(is, line)) {
      ++n;
      if (line.empty()) continue;
      std::istringstream ls(line);
      Merge merge;
      if (!(ls >> merge.first >> merge.second)) Fail(ErrorKind::kFormat, "bad BPE merge on line ", n);
      m.merges_.push_back(merge);
    }
    m.RebuildRanks();
    if (m.ranks_.size() != m.merges_.size()) Fail(ErrorKind::kFormat, "duplicate BPE merges");
    return m;
  }

  void Save(const std::filesystem::path& path) const { WriteFileBytes(path, Serialize()); }
  static BpeModel Load(const std::filesystem::path& path) { return Deserialize(ReadFileBytes(path)); }

 private:
  static bool EndsWith(const std::string& s, const std::string& suffix) {
    return s.size() > suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  }

  std::vector<std::string> Symbols(const std::string& word) const {
    std::vector<std::string> syms;
    for (std::size_t i = 0; i < word.size();) {
      std::size_t len = 1;
      const auto c = static_cast<unsigned char>(word[i]);
      if (c >= 0xF0) len = 4;
      else if (c >= 0xE0) len = 3;
      else if (c >= 0xC0) len = 2;
      len = std::min(len, word.size() - i);
      syms.push_back(word.substr(i, len));
      i += len;
    }
    if (!syms.empty()) syms.back() += end_marker;
    return syms;
  }

  static void MergeAll(std::vector<std::string>& syms, const Merge& m) {
    std::vector<std::string> out;
    out.reserve(syms.size());
    for (std::size_t i = 0; i < syms.size();) {
      if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
        out.push_back(syms[i] + syms[i + 1]);
        i += 2;
      } else {
        out.push_back(syms[i]);
        ++i;
      }
    }
    syms = std::move(out);
  }

  Tokens SegmentWord(const std::string& word) const {
    auto syms = Symbols(word);
    while (syms.size() > 1) {
      std::size_t best_rank = SIZE_MAX;
      const Merge* best = nullptr;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = ranks_.find(syms[i] + '\x1f' + syms[i + 1]);
        if (it != ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best = &merges_[it->second];
        }
      }
      if (!best) break;
      MergeAll(syms, *best);
    }
    Tokens out;
    for (std::size_t i = 0; i < syms.size(); ++i) {
      std::string s = syms[i];
      if (i + 1 == syms.size()) {
        s.resize(s.size() - end_marker.size());
      } else {
        s += continuation;
      }
      out.push_back(std::move(s));
    }
    return out;
  }

  void RebuildRanks() {
    ranks_.clear();
    for (std::size_t r = 0; r < merges_.size(); ++r)
      ranks_.emplace(merges_[r].first + '\x1f' + merges_[r].second, r);
  }

  std::vector<Merge> merges_;
  std::unordered_map<std::string, std::size_t> ranks_;
};

}  // namespace confbt
