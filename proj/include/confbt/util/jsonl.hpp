// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/util/error.hpp"

namespace confbt {

/// Reads every non-empty line of a JSON-lines file.
inline std::vector<nlohmann::json> ReadJsonLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kIo, "cannot open ", path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorKind::kFormat, path.string(), ":", n, ": ", e.what());
    }
  }
  return out;
}

/// Appends records to a JSON-lines file, one compact object per line.
class JsonLinesWriter {
 public:
  JsonLinesWriter(const std::filesystem::path& path, bool append) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) Fail(ErrorKind::kIo, "cannot write ", path.string());
  }
  void Write(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

}  // namespace confbt
