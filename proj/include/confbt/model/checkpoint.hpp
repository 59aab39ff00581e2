// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "confbt/model/config.hpp"
#include "confbt/model/params.hpp"
#include "confbt/util/hash.hpp"

namespace confbt {

/// Serialized model: config, vocabulary fingerprints and raw parameters.
///
/// File layout (little-endian):
///   8 bytes  magic "CONFBTCK"
///   u32      format version
///   u64      header length H
///   H bytes  JSON header {config, src_vocab_hash, tgt_vocab_hash, tensors[{name, shape}], metadata}
///   f64[]    tensor payloads in header order
struct ModelCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr char kMagic[8] = {'C', 'O', 'N', 'F', 'B', 'T', 'C', 'K'};

  ModelConfig config;
  std::string src_vocab_hash;
  std::string tgt_vocab_hash;
  TransformerParams params;
  nlohmann::json metadata = nlohmann::json::object();

  std::string Serialize() const {
    static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");
    nlohmann::json header;
    header["config"] = config;
    header["src_vocab_hash"] = src_vocab_hash;
    header["tgt_vocab_hash"] = tgt_vocab_hash;
    header["metadata"] = metadata;
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t k = 0; k < params.size(); ++k) {
      tensors.push_back({{"name", params.names[k]}, {"shape", params.tensors[k].shape()}});
    }
    header["tensors"] = tensors;
    const std::string h = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    Append(out, kFormatVersion);
    Append(out, static_cast<std::uint64_t>(h.size()));
    out += h;
    for (const Tensor& t : params.tensors) {
      out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
    }
    return out;
  }

  static ModelCheckpoint Deserialize(const std::string& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
      Fail(ErrorKind::kFormat, "not a confbt checkpoint (bad magic)");
    }
    pos = sizeof(kMagic);
    const auto version = Read<std::uint32_t>(bytes, pos);
    if (version != kFormatVersion) {
      Fail(ErrorKind::kFormat, "checkpoint format version ", version, " is not supported (expected ",
           kFormatVersion, ")");
    }
    const auto hlen = Read<std::uint64_t>(bytes, pos);
    if (pos + hlen > bytes.size()) Fail(ErrorKind::kFormat, "truncated checkpoint header");
    const nlohmann::json header = nlohmann::json::parse(bytes.substr(pos, hlen));
    pos += hlen;
    ModelCheckpoint ck;
    ck.config = header.at("config").get<ModelConfig>();
    ck.src_vocab_hash = header.at("src_vocab_hash").get<std::string>();
    ck.tgt_vocab_hash = header.at("tgt_vocab_hash").get<std::string>();
    ck.metadata = header.value("metadata", nlohmann::json::object());
    const ParamLayout layout = ParamLayout::Build(ck.config);
    const auto& tensors = header.at("tensors");
    if (tensors.size() != layout.names.size()) {
      Fail(ErrorKind::kFormat, "checkpoint has ", tensors.size(), " tensors, config expects ",
           layout.names.size());
    }
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      const auto name = tensors[k].at("name").get<std::string>();
      const auto shape = tensors[k].at("shape").get<Shape>();
      if (name != layout.names[k] || shape != layout.shapes[k]) {
        Fail(ErrorKind::kFormat, "checkpoint tensor ", k, " (", name, ") does not match config layout");
      }
      const std::size_t n = NumElements(shape);
      if (pos + n * sizeof(double) > bytes.size()) Fail(ErrorKind::kFormat, "truncated checkpoint payload");
      std::vector<double> data(n);
      std::memcpy(data.data(), bytes.data() + pos, n * sizeof(double));
      pos += n * sizeof(double);
      ck.params.names.push_back(name);
      ck.params.tensors.emplace_back(shape, std::move(data));
    }
    if (pos != bytes.size()) Fail(ErrorKind::kFormat, "trailing bytes in checkpoint");
    return ck;
  }

  void Save(const std::filesystem::path& path) const { WriteFileBytes(path, Serialize()); }
  static ModelCheckpoint Load(const std::filesystem::path& path) {
    return Deserialize(ReadFileBytes(path));
  }

 private:
  template <typename T>
  static void Append(std::string& out, T v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  static T Read(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) Fail(ErrorKind::kFormat, "truncated checkpoint");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
};

}  // namespace confbt
