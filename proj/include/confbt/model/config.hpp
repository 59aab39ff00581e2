// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

#include "confbt/util/error.hpp"

namespace confbt {

/// Which attention blocks over source positions are modulated by a
/// word-level confidence vector.
enum class ConfidenceSites { kEncoderSelf, kCross, kBoth };

/// How label-smoothing mass is distributed. kOverOthers gives the gold token
/// 1-eps and spreads eps over the other V-1 tokens; kUniformAll mixes the
/// one-hot target with a uniform distribution over all V tokens.
enum class SmoothingConvention { kOverOthers, kUniformAll };

inline std::string ToString(ConfidenceSites s) {
  switch (s) {
    case ConfidenceSites::kEncoderSelf: return "encoder_self";
    case ConfidenceSites::kCross: return "cross";
    case ConfidenceSites::kBoth: return "both";
  }
  return "both";
}

inline ConfidenceSites ParseConfidenceSites(const std::string& s) {
  if (s == "encoder_self") return ConfidenceSites::kEncoderSelf;
  if (s == "cross") return ConfidenceSites::kCross;
  if (s == "both") return ConfidenceSites::kBoth;
  Fail(ErrorKind::kConfig, "unknown confidence sites '", s, "'");
}

inline std::string ToString(SmoothingConvention s) {
  return s == SmoothingConvention::kOverOthers ? "over_others" : "uniform_all";
}

inline SmoothingConvention ParseSmoothingConvention(const std::string& s) {
  if (s == "over_others") return SmoothingConvention::kOverOthers;
  if (s == "uniform_all") return SmoothingConvention::kUniformAll;
  Fail(ErrorKind::kConfig, "unknown smoothing convention '", s, "'");
}

struct ModelConfig {
  static constexpr int kVersion = 1;

  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t d_model = 64;
  std::size_t ff_size = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  SmoothingConvention smoothing = SmoothingConvention::kOverOthers;
  std::size_t max_len = 128;
  bool share_target_embedding = false;
  ConfidenceSites confidence_sites = ConfidenceSites::kBoth;
  bool renormalize_confidence = false;

  void Validate() const {
    if (src_vocab == 0 || tgt_vocab == 0) Fail(ErrorKind::kConfig, "vocab sizes must be positive");
    if (d_model == 0 || heads == 0 || d_model % heads != 0) {
      Fail(ErrorKind::kConfig, "d_model ", d_model, " not divisible by heads ", heads);
    }
    if (layers == 0 || ff_size == 0) Fail(ErrorKind::kConfig, "layers and ff_size must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) Fail(ErrorKind::kConfig, "dropout must be in [0,1)");
    if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
      Fail(ErrorKind::kConfig, "label smoothing must be in [0,1)");
    }
    if (max_len < 2) Fail(ErrorKind::kConfig, "max_len must be at least 2");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"version", ModelConfig::kVersion},
                     {"src_vocab", c.src_vocab},
                     {"tgt_vocab", c.tgt_vocab},
                     {"d_model", c.d_model},
                     {"ff_size", c.ff_size},
                     {"layers", c.layers},
                     {"heads", c.heads},
                     {"dropout", c.dropout},
                     {"label_smoothing", c.label_smoothing},
                     {"smoothing", ToString(c.smoothing)},
                     {"max_len", c.max_len},
                     {"share_target_embedding", c.share_target_embedding},
                     {"confidence_sites", ToString(c.confidence_sites)},
                     {"renormalize_confidence", c.renormalize_confidence}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  const int version = j.value("version", -1);
  if (version != ModelConfig::kVersion) {
    Fail(ErrorKind::kFormat, "model config version ", version, " does not match supported version ",
         ModelConfig::kVersion);
  }
  c.src_vocab = j.at("src_vocab").get<std::size_t>();
  c.tgt_vocab = j.at("tgt_vocab").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.ff_size = j.at("ff_size").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.smoothing = ParseSmoothingConvention(j.at("smoothing").get<std::string>());
  c.max_len = j.at("max_len").get<std::size_t>();
  c.share_target_embedding = j.at("share_target_embedding").get<bool>();
  c.confidence_sites = ParseConfidenceSites(j.at("confidence_sites").get<std::string>());
  c.renormalize_confidence = j.at("renormalize_confidence").get<bool>();
}

}  // namespace confbt
