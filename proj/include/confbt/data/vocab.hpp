// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "confbt/util/error.hpp"
#include "confbt/util/hash.hpp"

namespace confbt {

using TokenIds = std::vector<int>;

/// Reserved ids, identical for every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumReserved = 4;

/// Token <-> id bijection. Ids [0, 4) are reserved for <pad>, <s>, </s>,
/// <unk>; the vocab file lists the remaining tokens, one per line, so that
/// line n (0-based) has id n + 4.
class Vocab {
 public:
  Vocab() {
    for (const char* t : {"<pad>", "<s>", "</s>", "<unk>"}) Add(t);
  }

  /// Tokens sorted by descending frequency, ties lexicographic.
  static Vocab Build(const std::vector<std::vector<std::string>>& corpus) {
    std::map<std::string, std::size_t> counts;
    for (const auto& sent : corpus)
      for (const auto& tok : sent) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab v;
    for (const auto& [tok, n] : items) {
      if (!v.Contains(tok)) v.Add(tok);
    }
    return v;
  }

  static Vocab FromTokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
      if (v.Contains(t)) Fail(ErrorKind::kFormat, "duplicate vocab token '", t, "'");
      v.Add(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  bool Contains(const std::string& tok) const { return ids_.count(tok) != 0; }

  int Id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnkId : it->second;
  }
  const std::string& Token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      Fail(ErrorKind::kVocab, "id ", id, " outside vocabulary of ", tokens_.size());
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  TokenIds Encode(const std::vector<std::string>& toks) const {
    TokenIds ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(Id(t));
    return ids;
  }
  /// Drops reserved tokens other than <unk>.
  std::vector<std::string> Decode(const TokenIds& ids) const {
    std::vector<std::string> out;
    for (int id : ids) {
      if (id == kPadId || id == kBosId || id == kEosId) continue;
      out.push_back(Token(id));
    }
    return out;
  }

  std::string Serialize() const {
    std::ostringstream os;
    for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) os << tokens_[i] << '\n';
    return os.str();
  }
  std::string Hash() const { return Sha256Hex(Serialize()); }

  void Save(const std::filesystem::path& path) const { WriteFileBytes(path, Serialize()); }
  static Vocab Load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) Fail(ErrorKind::kIo, "cannot open vocab ", path.string());
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(in, line)) toks.push_back(line);
    return FromTokens(toks);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void Add(const std::string& tok) {
    ids_.emplace(tok, static_cast<int>(tokens_.size()));
    tokens_.push_back(tok);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace confbt
