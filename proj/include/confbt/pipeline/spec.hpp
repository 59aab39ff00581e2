// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "confbt/confidence/measures.hpp"
#include "confbt/decode/decode.hpp"
#include "confbt/model/config.hpp"
#include "confbt/training/mix.hpp"
#include "confbt/training/trainer.hpp"
#include "confbt/util/hash.hpp"
#include "confbt/util/json.hpp"
#include "confbt/util/version.hpp"

namespace confbt {

/// Confidence scoring between generation and forward training. Disabled
/// means measure "none": no scoring and unit weights.
struct ConfidenceSpec {
  bool enabled = true;
  MeasureConfig measure;
  McOptions mc;
};

inline void to_json(nlohmann::json& j, const ConfidenceSpec& c) {
  j = c.measure;
  if (!c.enabled) j["measure"] = "none";
  const nlohmann::json mc = c.mc;
  j.update(mc);
}

inline void from_json(const nlohmann::json& j, ConfidenceSpec& c) {
  nlohmann::json m = j;
  c.enabled = m.at("measure").get<std::string>() != "none";
  if (!c.enabled) m["measure"] = ToString(MeasureConfig{}.kind);
  c.measure = m.get<MeasureConfig>();
  c.mc = m.get<McOptions>();
}

/// Everything a back-translation run needs. Empty optional paths mean
/// "not provided".
struct PipelineSpec {
  std::filesystem::path authentic_source;
  std::filesystem::path authentic_target;
  /// Target-language monolingual text to back-translate.
  std::filesystem::path monolingual;
  /// Source-language monolingual text, needed from round 2 on.
  std::filesystem::path source_monolingual;
  std::filesystem::path test_source;
  std::filesystem::path test_target;
  std::filesystem::path output_dir;

  std::size_t bpe_merges = 0;  // 0: word level
  bool joint_bpe = false;
  ModelConfig model;  // vocab sizes are filled in from the data
  TrainingConfig reverse_training;
  TrainingConfig forward_training;
  DecodeConfig generation;
  std::size_t max_monolingual_len = 64;
  ConfidenceSpec confidence;
  MixConfig mix;
  std::size_t iterations = 1;
  /// Rounds after the first continue from the previous models.
  bool fine_tune = false;
  DecodeConfig evaluation;
  std::uint64_t seed = 1;
  /// Runtime only; results do not depend on it.
  std::size_t threads = 1;

  bool has_test() const { return !test_source.empty() && !test_target.empty(); }

  void Validate() const {
    if (authentic_source.empty() || authentic_target.empty()) Fail(ErrorKind::kConfig, "authentic corpus paths are required");
    if (monolingual.empty()) Fail(ErrorKind::kConfig, "monolingual corpus path is required");
    if (output_dir.empty()) Fail(ErrorKind::kConfig, "output_dir is required");
    if (test_source.empty() != test_target.empty()) Fail(ErrorKind::kConfig, "test_source and test_target go together");
    if (iterations < 1) Fail(ErrorKind::kConfig, "iterations must be >= 1");
    if (iterations > 1 && source_monolingual.empty()) {
      Fail(ErrorKind::kConfig, "iterations > 1 needs source_monolingual to retrain the reverse model");
    }
    if (!confidence.enabled && (mix.use_sentence_confidence || mix.use_word_confidence)) {
      Fail(ErrorKind::kConfig, "confidence weighting is on but the measure is none");
    }
    if (confidence.enabled) {
      confidence.measure.Validate();
      if (confidence.measure.kind != Measure::kPtp && confidence.mc.k < 1) Fail(ErrorKind::kConfig, "k must be >= 1");
    }
    if (max_monolingual_len < 1) Fail(ErrorKind::kConfig, "max_monolingual_len must be >= 1");
    generation.Validate();
    evaluation.Validate();
    reverse_training.Validate();
    forward_training.Validate();
  }
};

inline void to_json(nlohmann::json& j, const PipelineSpec& s) {
  j = nlohmann::json{{"authentic_source", s.authentic_source.string()},
                     {"authentic_target", s.authentic_target.string()},
                     {"monolingual", s.monolingual.string()},
                     {"source_monolingual", s.source_monolingual.string()},
                     {"test_source", s.test_source.string()},
                     {"test_target", s.test_target.string()},
                     {"output_dir", s.output_dir.string()},
                     {"bpe_merges", s.bpe_merges},
                     {"joint_bpe", s.joint_bpe},
                     {"model", s.model},
                     {"reverse_training", s.reverse_training},
                     {"forward_training", s.forward_training},
                     {"generation", s.generation},
                     {"max_monolingual_len", s.max_monolingual_len},
                     {"confidence", s.confidence},
                     {"mix", s.mix},
                     {"iterations", s.iterations},
                     {"fine_tune", s.fine_tune},
                     {"evaluation", s.evaluation},
                     {"seed", s.seed}};
}

/// Missing keys keep their defaults, nested sections included.
inline void from_json(const nlohmann::json& j, PipelineSpec& s) {
  const PipelineSpec d;
  const nlohmann::json keys = d;
  if (!j.is_object()) Fail(ErrorKind::kConfig, "pipeline config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.contains(key)) Fail(ErrorKind::kConfig, "pipeline config: unknown key '", key, "'");
  }
  auto path = [&](const char* key) { return std::filesystem::path(j.value(key, std::string())); };
  auto section = [&]<class T>(const char* key, const T& def) {
    return FromJsonWithDefaults<T>(j.contains(key) ? j[key] : nlohmann::json(), key, def);
  };
  s.authentic_source = path("authentic_source");
  s.authentic_target = path("authentic_target");
  s.monolingual = path("monolingual");
  s.source_monolingual = path("source_monolingual");
  s.test_source = path("test_source");
  s.test_target = path("test_target");
  s.output_dir = path("output_dir");
  s.bpe_merges = j.value("bpe_merges", d.bpe_merges);
  s.joint_bpe = j.value("joint_bpe", d.joint_bpe);
  s.model = section("model", d.model);
  s.reverse_training = section("reverse_training", d.reverse_training);
  s.forward_training = section("forward_training", d.forward_training);
  s.generation = section("generation", d.generation);
  s.max_monolingual_len = j.value("max_monolingual_len", d.max_monolingual_len);
  s.confidence = section("confidence", d.confidence);
  s.mix = section("mix", d.mix);
  s.iterations = j.value("iterations", d.iterations);
  s.fine_tune = j.value("fine_tune", d.fine_tune);
  s.evaluation = section("evaluation", d.evaluation);
  s.seed = j.value("seed", d.seed);
}

/// One executed stage: its output files (relative to the run directory)
/// with their SHA-256 and stage-specific facts.
struct StageRecord {
  std::string name;
  std::size_t round = 0;
  std::string status = "complete";
  std::map<std::string, std::string> outputs;
  nlohmann::json info = nlohmann::json::object();

  friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

inline void to_json(nlohmann::json& j, const StageRecord& r) {
  j = nlohmann::json{{"name", r.name}, {"round", r.round}, {"status", r.status}, {"outputs", r.outputs}, {"info", r.info}};
}

inline void from_json(const nlohmann::json& j, StageRecord& r) {
  r.name = j.at("name").get<std::string>();
  r.round = j.at("round").get<std::size_t>();
  r.status = j.at("status").get<std::string>();
  r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  r.info = j.at("info");
}

struct ExperimentManifest {
  static constexpr int kFormatVersion = 1;

  std::string tool = std::string("confbt ") + kVersion;
  nlohmann::json config = nlohmann::json::object();
  /// Input file name -> SHA-256.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<StageRecord> stages;
  nlohmann::json metrics = nlohmann::json::object();
  std::string status = "partial";  // partial | failed | complete
  std::string error;

  const StageRecord* Find(const std::string& name, std::size_t round) const {
    for (const auto& s : stages)
      if (s.name == name && s.round == round) return &s;
    return nullptr;
  }

  void Save(const std::filesystem::path& path) const;
  static ExperimentManifest Load(const std::filesystem::path& path);

  friend bool operator==(const ExperimentManifest&, const ExperimentManifest&) = default;
};

inline void to_json(nlohmann::json& j, const ExperimentManifest& m) {
  j = nlohmann::json{{"format_version", ExperimentManifest::kFormatVersion},
                     {"tool", m.tool},
                     {"config", m.config},
                     {"inputs", m.inputs},
                     {"seeds", m.seeds},
                     {"stages", m.stages},
                     {"metrics", m.metrics},
                     {"status", m.status},
                     {"error", m.error}};
}

inline void from_json(const nlohmann::json& j, ExperimentManifest& m) {
  const int v = j.value("format_version", -1);
  if (v != ExperimentManifest::kFormatVersion) Fail(ErrorKind::kFormat, "unsupported manifest version ", v);
  m.tool = j.at("tool").get<std::string>();
  m.config = j.at("config");
  m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  m.stages = j.at("stages").get<std::vector<StageRecord>>();
  m.metrics = j.at("metrics");
  m.status = j.at("status").get<std::string>();
  m.error = j.at("error").get<std::string>();
}

inline void ExperimentManifest::Save(const std::filesystem::path& path) const {
  WriteFileBytes(path, nlohmann::json(*this).dump(2) + "\n");
}

inline ExperimentManifest ExperimentManifest::Load(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(ReadFileBytes(path)).get<ExperimentManifest>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kFormat, path.string(), ": ", e.what());
  }
}

}  // namespace confbt
