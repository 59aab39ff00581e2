// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "confbt/util/error.hpp"
#include "confbt/util/hash.hpp"

namespace confbt {

using Tokens = std::vector<std::string>;

/// Whitespace tokenization that also splits ASCII punctuation into separate
/// tokens. Bytes >= 0x80 (UTF-8 continuation/lead bytes) count as word bytes.
inline Tokens Tokenize(const std::string& line) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char ch : line) {
    if (std::isspace(ch)) {
      flush();
    } else if (ch < 0x80 && std::ispunct(ch)) {
      flush();
      out.emplace_back(1, static_cast<char>(ch));
    } else {
      cur.push_back(static_cast<char>(ch));
    }
  }
  flush();
  return out;
}

inline std::string Join(const Tokens& toks, const std::string& sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += sep;
    out += toks[i];
  }
  return out;
}

/// Splits on single spaces without further processing (pre-tokenized text).
inline Tokens SplitSpaces(const std::string& line) {
  Tokens out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

inline std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open ", path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

inline void WriteLines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string bytes;
  for (const auto& l : lines) {
    bytes += l;
    bytes += '\n';
  }
  WriteFileBytes(path, bytes);
}

/// Parallel corpus as two aligned line lists.
struct ParallelText {
  std::vector<std::string> source;
  std::vector<std::string> target;

  std::size_t size() const { return source.size(); }

  static ParallelText Read(const std::filesystem::path& src, const std::filesystem::path& tgt) {
    ParallelText p{ReadLines(src), ReadLines(tgt)};
    if (p.source.size() != p.target.size()) {
      Fail(ErrorKind::kFormat, "parallel files have ", p.source.size(), " and ", p.target.size(),
           " lines: ", src.string(), ", ", tgt.string());
    }
    return p;
  }
};

}  // namespace confbt
