// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "confbt/confidence/scoring.hpp"
#include "confbt/data/bpe.hpp"
#include "confbt/data/text.hpp"
#include "confbt/data/vocab.hpp"
#include "confbt/decode/decode.hpp"
#include "confbt/eval/bleu.hpp"
#include "confbt/model/checkpoint.hpp"
#include "confbt/pipeline/spec.hpp"
#include "confbt/training/mix.hpp"
#include "confbt/training/trainer.hpp"
#include "confbt/util/jsonl.hpp"
#include "confbt/util/parallel.hpp"

namespace confbt {

enum class Stage : std::uint64_t {
  kPrepare = 0,
  kSourceGenerate = 1,
  kReverse = 2,
  kGenerate = 3,
  kScore = 4,
  kMix = 5,
  kForward = 6,
  kEvaluate = 7,
};

/// Seeds are master + 1000 * round + a fixed per-stage offset, so a new
/// stage never moves the seeds of existing ones.
inline std::uint64_t StageSeed(std::uint64_t master, std::size_t round, Stage s) {
  return master + 1000 * round + static_cast<std::uint64_t>(s);
}

inline constexpr const char* kTargetToSource = "target-to-source";
inline constexpr const char* kSourceToTarget = "source-to-target";

// ---------------------------------------------------------------------------
// Synthetic generation

struct GenerationOptions {
  DecodeConfig decode;
  /// Longer inputs are skipped.
  std::size_t max_input_len = 64;
  std::size_t threads = 1;
  /// When set, the checkpoint's vocabularies must match: its source side is
  /// the language being translated.
  std::string input_vocab_hash;
  std::string output_vocab_hash;
};

struct SyntheticCorpus {
  std::vector<SyntheticPair> pairs;
  std::size_t skipped_overlength = 0;
  std::size_t skipped_empty = 0;
  std::size_t truncated = 0;
};

/// One prediction per input sentence, keyed by its index. Sampling draws
/// sentence i from RngStream(seed, 0x5a).Substream(i); beam and greedy
/// search ignore the seed.
inline SyntheticCorpus GenerateSynthetic(const ModelCheckpoint& model_ck, const std::vector<TokenIds>& inputs,
                                         const GenerationOptions& opt) {
  opt.decode.Validate();
  bool any = false;
  for (const auto& s : inputs) any = any || !s.empty();
  if (!any) Fail(ErrorKind::kValue, "generate_synthetic: empty monolingual corpus");
  if ((!opt.input_vocab_hash.empty() && model_ck.src_vocab_hash != opt.input_vocab_hash) ||
      (!opt.output_vocab_hash.empty() && model_ck.tgt_vocab_hash != opt.output_vocab_hash)) {
    Fail(ErrorKind::kState, "generate_synthetic: checkpoint vocabularies do not match the translation direction");
  }
  const Transformer model(model_ck.config);
  const Decoder decoder(model, model_ck.params);
  const std::size_t limit = std::min(opt.max_input_len, model_ck.config.max_len - 1);
  const RngStream root(opt.decode.seed, 0x5a);
  std::vector<std::optional<SyntheticPair>> out(inputs.size());
  SyntheticCorpus corpus;
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].empty()) {
      ++corpus.skipped_empty;
    } else if (inputs[i].size() > limit) {
      ++corpus.skipped_overlength;
    } else {
      todo.push_back(i);
    }
  }
  ParallelFor(todo.size(), opt.threads, [&](std::size_t k) {
    const std::size_t i = todo[k];
    RngStream rng = root.Substream(i);
    Hypothesis h = decoder.Run(inputs[i], opt.decode, rng);
    out[i] = SyntheticPair{std::to_string(i), std::move(h.tokens), inputs[i], std::move(h.step_logprobs), h.truncated};
  });
  for (auto& p : out) {
    if (!p) continue;
    corpus.truncated += p->truncated ? 1 : 0;
    corpus.pairs.push_back(std::move(*p));
  }
  return corpus;
}

inline void SaveSynthetic(const std::filesystem::path& path, const std::vector<SyntheticPair>& pairs) {
  JsonLinesWriter w(path, false);
  for (const auto& p : pairs) w.Write(p);
}

inline std::vector<SyntheticPair> LoadSynthetic(const std::filesystem::path& path) {
  std::vector<SyntheticPair> out;
  for (const auto& j : ReadJsonLines(path)) out.push_back(j.get<SyntheticPair>());
  return out;
}

// ---------------------------------------------------------------------------
// Corpora

/// Tokenized, segmented and id-encoded views of the run's text files.
struct PreparedCorpora {
  std::optional<BpeModel> src_bpe;
  std::optional<BpeModel> tgt_bpe;
  Vocab src_vocab;
  Vocab tgt_vocab;
  std::vector<ParallelPair> authentic;
  std::vector<TokenIds> monolingual;
  std::vector<TokenIds> source_monolingual;
  std::vector<TokenIds> test_source;
  std::vector<std::string> test_references;  // tokenized, space-joined

  Tokens SegmentSource(const std::string& line) const { return Segment(src_bpe, line); }
  Tokens SegmentTarget(const std::string& line) const { return Segment(tgt_bpe, line); }
  std::string SourceText(const TokenIds& ids) const { return Join(Merge(src_bpe, src_vocab.Decode(ids))); }
  std::string TargetText(const TokenIds& ids) const { return Join(Merge(tgt_bpe, tgt_vocab.Decode(ids))); }
  Tokens TargetWords(const TokenIds& ids) const { return Merge(tgt_bpe, tgt_vocab.Decode(ids)); }

 private:
  static Tokens Segment(const std::optional<BpeModel>& bpe, const std::string& line) {
    Tokens t = Tokenize(line);
    return bpe ? bpe->Apply(t) : t;
  }
  static Tokens Merge(const std::optional<BpeModel>& bpe, const Tokens& t) { return bpe ? bpe->Undo(t) : t; }
};

// ---------------------------------------------------------------------------
// Runner

struct PipelineHooks {
  /// Called before a stage executes (not when it is reused). Throwing from
  /// here aborts the run as a stage failure would.
  std::function<void(const std::string& stage, std::size_t round)> before_stage;
};

namespace detail {

inline std::string RoundDir(std::size_t round) { return "round_" + std::to_string(round); }

class PipelineRunner {
 public:
  PipelineRunner(const PipelineSpec& spec, const PipelineHooks& hooks, nlohmann::json extra_config = {})
      : spec_(spec), hooks_(hooks), out_(spec.output_dir) {
    spec_.Validate();
    manifest_.config = spec_;
    if (!extra_config.is_null()) manifest_.config.update(extra_config);
    auto input = [&](const char* name, const std::filesystem::path& p) {
      if (p.empty()) return;
      if (!std::filesystem::is_regular_file(p)) Fail(ErrorKind::kIo, "missing input ", name, ": ", p.string());
      manifest_.inputs[name] = FileSha256(p);
    };
    input("authentic_source", spec_.authentic_source);
    input("authentic_target", spec_.authentic_target);
    input("monolingual", spec_.monolingual);
    input("source_monolingual", spec_.source_monolingual);
    input("test_source", spec_.test_source);
    input("test_target", spec_.test_target);
    std::filesystem::create_directories(out_);
    const auto path = out_ / "manifest.json";
    if (std::filesystem::exists(path)) {
      try {
        auto prior = ExperimentManifest::Load(path);
        if (prior.config == manifest_.config && prior.inputs == manifest_.inputs && prior.tool == manifest_.tool) {
          prior_ = std::move(prior);
        }
      } catch (const Error&) {
      }
    }
    if (!prior_) ClearOutputs();
    Save();
  }

  ExperimentManifest& manifest() { return manifest_; }
  const PipelineSpec& spec() const { return spec_; }
  const std::filesystem::path& out() const { return out_; }

  void Save() const { manifest_.Save(out_ / "manifest.json"); }

  std::uint64_t Seed(std::size_t round, Stage s, const std::string& label) {
    const std::uint64_t v = StageSeed(spec_.seed, round, s);
    manifest_.seeds[label] = v;
    return v;
  }

  /// Records every stage seed of rounds 1..rounds up front, so reused
  /// stages still show theirs.
  void RecordSeeds(std::size_t rounds) {
    static const std::pair<Stage, const char*> kStages[] = {
        {Stage::kSourceGenerate, "source_generate"}, {Stage::kReverse, "reverse"}, {Stage::kGenerate, "generate"},
        {Stage::kScore, "score"}, {Stage::kMix, "mix"}, {Stage::kForward, "forward"}, {Stage::kEvaluate, "evaluate"}};
    for (std::size_t r = 1; r <= rounds; ++r) {
      for (const auto& [stage, name] : kStages) {
        if (stage == Stage::kSourceGenerate && r == 1) continue;
        if (stage == Stage::kScore && !spec_.confidence.enabled) continue;
        if (stage == Stage::kEvaluate && !spec_.has_test()) continue;
        Seed(r, stage, RoundDir(r) + "." + name);
      }
    }
  }

  /// Runs `fn(record)` unless a completed record for this stage can be
  /// reused. Reuse covers a prefix of the previous run: once one stage
  /// executes, every later stage executes too.
  template <class Fn>
  nlohmann::json RunStage(const std::string& name, std::size_t round, Fn&& fn) {
    if (const StageRecord* prior = Reusable(name, round)) {
      manifest_.stages.push_back(*prior);
      Save();
      return prior->info;
    }
    reusing_ = false;
    if (hooks_.before_stage) hooks_.before_stage(name, round);
    StageRecord rec;
    rec.name = name;
    rec.round = round;
    rec.info = fn(rec);
    manifest_.stages.push_back(rec);
    Save();
    return rec.info;
  }

  void Output(StageRecord& rec, const std::filesystem::path& rel) const {
    rec.outputs[rel.generic_string()] = FileSha256(out_ / rel);
  }

  void MarkFailed(const std::exception& e) {
    manifest_.status = "failed";
    manifest_.error = e.what();
    Save();
  }

 private:
  const StageRecord* Reusable(const std::string& name, std::size_t round) const {
    if (!reusing_ || !prior_) return nullptr;
    const std::size_t idx = manifest_.stages.size();
    if (idx >= prior_->stages.size()) return nullptr;
    const StageRecord& s = prior_->stages[idx];
    if (s.name != name || s.round != round || s.status != "complete") return nullptr;
    for (const auto& [rel, hash] : s.outputs) {
      const auto p = out_ / rel;
      if (!std::filesystem::is_regular_file(p) || FileSha256(p) != hash) return nullptr;
    }
    return &s;
  }

  /// Artifacts of an incompatible earlier run would otherwise be resumed.
  void ClearOutputs() const {
    for (const auto& e : std::filesystem::directory_iterator(out_)) {
      const std::string n = e.path().filename().string();
      if (n.rfind("round_", 0) == 0 || n == "sweep" || n == "compare" || n == "bpe.src" || n == "bpe.tgt" || n == "vocab.src" ||
          n == "vocab.tgt" || n == "manifest.json" || n == "sweep.json" || n == "sweep.txt" ||
          n == "compare.json" || n == "compare.txt") {
        std::filesystem::remove_all(e.path());
      }
    }
  }

  PipelineSpec spec_;
  PipelineHooks hooks_;
  std::filesystem::path out_;
  ExperimentManifest manifest_;
  std::optional<ExperimentManifest> prior_;
  bool reusing_ = true;
};

/// Learns BPE and vocabularies. Writes bpe.src/bpe.tgt (when segmenting)
/// and vocab.src/vocab.tgt.
inline nlohmann::json PrepareStage(PipelineRunner& run, StageRecord& rec) {
  const PipelineSpec& spec = run.spec();
  const ParallelText auth = ParallelText::Read(spec.authentic_source, spec.authentic_target);
  if (auth.size() == 0) confbt::Fail(ErrorKind::kValue, "empty authentic corpus");
  std::vector<Tokens> src, tgt;
  for (std::size_t i = 0; i < auth.size(); ++i) {
    src.push_back(Tokenize(auth.source[i]));
    tgt.push_back(Tokenize(auth.target[i]));
    if (src.back().empty() || tgt.back().empty()) {
      confbt::Fail(ErrorKind::kValue, "authentic pair ", i, " has an empty side");
    }
  }
  std::size_t mono_lines = 0;
  for (const auto& l : ReadLines(spec.monolingual)) {
    Tokens t = Tokenize(l);
    if (t.empty()) continue;
    tgt.push_back(std::move(t));
    ++mono_lines;
  }
  if (mono_lines == 0) confbt::Fail(ErrorKind::kValue, "empty monolingual corpus: ", spec.monolingual.string());
  if (!spec.source_monolingual.empty()) {
    for (const auto& l : ReadLines(spec.source_monolingual)) {
      Tokens t = Tokenize(l);
      if (!t.empty()) src.push_back(std::move(t));
    }
  }
  const auto& out = run.out();
  if (spec.bpe_merges > 0) {
    BpeModel sb, tb;
    if (spec.joint_bpe) {
      std::vector<Tokens> all = src;
      all.insert(all.end(), tgt.begin(), tgt.end());
      sb = tb = BpeModel::Learn(all, spec.bpe_merges);
    } else {
      sb = BpeModel::Learn(src, spec.bpe_merges);
      tb = BpeModel::Learn(tgt, spec.bpe_merges);
    }
    for (auto& s : src) s = sb.Apply(s);
    for (auto& t : tgt) t = tb.Apply(t);
    sb.Save(out / "bpe.src");
    tb.Save(out / "bpe.tgt");
    run.Output(rec, "bpe.src");
    run.Output(rec, "bpe.tgt");
  }
  const Vocab sv = Vocab::Build(src), tv = Vocab::Build(tgt);
  sv.Save(out / "vocab.src");
  tv.Save(out / "vocab.tgt");
  run.Output(rec, "vocab.src");
  run.Output(rec, "vocab.tgt");
  return {{"authentic_pairs", auth.size()},
          {"monolingual_sentences", mono_lines},
          {"src_vocab", sv.size()},
          {"tgt_vocab", tv.size()}};
}

inline PreparedCorpora LoadCorpora(const PipelineSpec& spec, const std::filesystem::path& out) {
  PreparedCorpora c;
  if (spec.bpe_merges > 0) {
    c.src_bpe = BpeModel::Load(out / "bpe.src");
    c.tgt_bpe = BpeModel::Load(out / "bpe.tgt");
  }
  c.src_vocab = Vocab::Load(out / "vocab.src");
  c.tgt_vocab = Vocab::Load(out / "vocab.tgt");
  const ParallelText auth = ParallelText::Read(spec.authentic_source, spec.authentic_target);
  for (std::size_t i = 0; i < auth.size(); ++i) {
    c.authentic.push_back({c.src_vocab.Encode(c.SegmentSource(auth.source[i])),
                           c.tgt_vocab.Encode(c.SegmentTarget(auth.target[i]))});
  }
  for (const auto& l : ReadLines(spec.monolingual)) c.monolingual.push_back(c.tgt_vocab.Encode(c.SegmentTarget(l)));
  if (!spec.source_monolingual.empty()) {
    for (const auto& l : ReadLines(spec.source_monolingual)) {
      c.source_monolingual.push_back(c.src_vocab.Encode(c.SegmentSource(l)));
    }
  }
  if (spec.has_test()) {
    const ParallelText test = ParallelText::Read(spec.test_source, spec.test_target);
    for (std::size_t i = 0; i < test.size(); ++i) {
      c.test_source.push_back(c.src_vocab.Encode(c.SegmentSource(test.source[i])));
      c.test_references.push_back(Join(Tokenize(test.target[i])));
    }
  }
  return c;
}

inline ModelConfig DirectionConfig(const PipelineSpec& spec, const PreparedCorpora& c, bool reverse) {
  ModelConfig m = spec.model;
  m.src_vocab = reverse ? c.tgt_vocab.size() : c.src_vocab.size();
  m.tgt_vocab = reverse ? c.src_vocab.size() : c.tgt_vocab.size();
  return m;
}

inline nlohmann::json TrainInfo(const TrainResult& r) {
  return {{"steps", r.steps},
          {"epochs", r.epochs},
          {"diverged", r.diverged},
          {"final_loss", r.log.empty() ? 0.0 : r.log.back().loss}};
}

/// Trains and saves one direction. `dir` is relative to the run directory.
inline TrainResult TrainDirection(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c, bool reverse,
                                  const EpochSource& data, std::uint64_t seed, const std::string& dir,
                                  const std::string& name, const std::optional<std::filesystem::path>& init,
                                  const MixConfig* mix = nullptr) {
  const PipelineSpec& spec = run.spec();
  TrainingConfig cfg = reverse ? spec.reverse_training : spec.forward_training;
  cfg.seed = seed;
  // Weighting follows the mix; without one every pair has weight 1.
  cfg.use_sentence_confidence = mix && mix->use_sentence_confidence;
  cfg.use_word_confidence = mix && mix->use_word_confidence;
  cfg.threads = spec.threads;
  TrainHooks hooks;
  std::filesystem::create_directories(run.out() / dir);
  hooks.log_path = run.out() / dir / (name + ".log.csv");
  hooks.src_vocab_hash = reverse ? c.tgt_vocab.Hash() : c.src_vocab.Hash();
  hooks.tgt_vocab_hash = reverse ? c.src_vocab.Hash() : c.tgt_vocab.Hash();
  if (init) hooks.init = ModelCheckpoint::Load(run.out() / *init).params;
  TrainResult r = TrainMle(data, DirectionConfig(spec, c, reverse), cfg, hooks);
  r.checkpoint.metadata["direction"] = reverse ? kTargetToSource : kSourceToTarget;
  r.checkpoint.Save(run.out() / dir / (name + ".ckpt"));
  run.Output(rec, dir + "/" + name + ".ckpt");
  run.Output(rec, dir + "/" + name + ".log.csv");
  return r;
}

inline nlohmann::json SourceGenerateStage(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c,
                                          std::size_t round) {
  const PipelineSpec& spec = run.spec();
  const auto forward = ModelCheckpoint::Load(run.out() / RoundDir(round - 1) / "forward.ckpt");
  GenerationOptions opt;
  opt.decode = spec.generation;
  opt.decode.seed = run.Seed(round, Stage::kSourceGenerate, RoundDir(round) + ".source_generate");
  opt.max_input_len = spec.max_monolingual_len;
  opt.threads = spec.threads;
  opt.input_vocab_hash = c.src_vocab.Hash();
  opt.output_vocab_hash = c.tgt_vocab.Hash();
  const SyntheticCorpus s = GenerateSynthetic(forward, c.source_monolingual, opt);
  const std::string rel = RoundDir(round) + "/source_synthetic.jsonl";
  SaveSynthetic(run.out() / rel, s.pairs);
  run.Output(rec, rel);
  return {{"generated", s.pairs.size()}, {"skipped_overlength", s.skipped_overlength}};
}

inline nlohmann::json ReverseStage(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c,
                                   std::size_t round) {
  const PipelineSpec& spec = run.spec();
  std::vector<WeightedPair> corpus;
  for (const auto& p : c.authentic) corpus.push_back({p.target, p.source, 1.0, std::nullopt, false});
  if (round > 1) {
    for (auto& s : LoadSynthetic(run.out() / RoundDir(round) / "source_synthetic.jsonl")) {
      if (!s.source.empty()) corpus.push_back({std::move(s.source), std::move(s.target), 1.0, std::nullopt, true});
    }
  }
  std::optional<std::filesystem::path> init;
  if (spec.fine_tune && round > 1) init = RoundDir(round - 1) + "/reverse.ckpt";
  const auto seed = run.Seed(round, Stage::kReverse, RoundDir(round) + ".reverse");
  const TrainResult r = TrainDirection(run, rec, c, true, [&](std::size_t) { return corpus; }, seed,
                                       RoundDir(round), "reverse", init);
  nlohmann::json info = TrainInfo(r);
  info["pairs"] = corpus.size();
  return info;
}

inline nlohmann::json GenerateStage(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c,
                                    std::size_t round) {
  const PipelineSpec& spec = run.spec();
  const auto reverse = ModelCheckpoint::Load(run.out() / RoundDir(round) / "reverse.ckpt");
  GenerationOptions opt;
  opt.decode = spec.generation;
  opt.decode.seed = run.Seed(round, Stage::kGenerate, RoundDir(round) + ".generate");
  opt.max_input_len = spec.max_monolingual_len;
  opt.threads = spec.threads;
  opt.input_vocab_hash = c.tgt_vocab.Hash();
  opt.output_vocab_hash = c.src_vocab.Hash();
  const SyntheticCorpus s = GenerateSynthetic(reverse, c.monolingual, opt);
  const std::string dir = RoundDir(round);
  SaveSynthetic(run.out() / dir / "synthetic.jsonl", s.pairs);
  std::vector<std::string> src_text, tgt_text;
  for (const auto& p : s.pairs) {
    src_text.push_back(c.SourceText(p.source));
    tgt_text.push_back(c.TargetText(p.target));
  }
  WriteLines(run.out() / dir / "synthetic.src", src_text);
  WriteLines(run.out() / dir / "synthetic.tgt", tgt_text);
  for (const char* f : {"synthetic.jsonl", "synthetic.src", "synthetic.tgt"}) run.Output(rec, dir + "/" + f);
  return {{"generated", s.pairs.size()},
          {"skipped_overlength", s.skipped_overlength},
          {"skipped_empty", s.skipped_empty},
          {"truncated", s.truncated}};
}

/// Scores the round's synthetic corpus into `file` under the round directory.
inline nlohmann::json ScoreStage(PipelineRunner& run, StageRecord& rec, std::size_t round, const MeasureConfig& measure,
                                 const std::string& file = "confidence.jsonl") {
  const PipelineSpec& spec = run.spec();
  const std::string dir = RoundDir(round);
  const auto reverse = ModelCheckpoint::Load(run.out() / dir / "reverse.ckpt");
  const auto pairs = LoadSynthetic(run.out() / dir / "synthetic.jsonl");
  ScoringConfig cfg;
  cfg.measure = measure;
  cfg.mc = spec.confidence.mc;
  cfg.seed = run.Seed(round, Stage::kScore, dir + ".score");
  cfg.threads = spec.threads;
  const Transformer model(reverse.config);
  const auto records = ScoreCorpus(model, reverse.params, pairs, cfg, run.out() / dir / file);
  run.Output(rec, dir + "/" + file);
  double sum = 0.0;
  std::size_t flagged = 0;
  for (const auto& r : records) {
    sum += r.sentence_confidence;
    flagged += r.flags.empty() ? 0 : 1;
  }
  return {{"scored", records.size()},
          {"flagged", flagged},
          {"mean_sentence_confidence", records.empty() ? 0.0 : sum / static_cast<double>(records.size())}};
}

/// Forward training on authentic pairs plus the first `synthetic_limit`
/// synthetic pairs of `round`, weighted by the records in `confidence`.
inline nlohmann::json ForwardStage(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c, std::size_t round,
                                   const std::string& dir, MixConfig mix, std::size_t synthetic_limit,
                                   const std::string& confidence = "confidence.jsonl") {
  const PipelineSpec& spec = run.spec();
  auto synthetic = LoadSynthetic(run.out() / RoundDir(round) / "synthetic.jsonl");
  if (synthetic_limit < synthetic.size()) synthetic.resize(synthetic_limit);
  std::unordered_map<std::string, ConfidenceRecord> records;
  const bool weighted = mix.use_sentence_confidence || mix.use_word_confidence;
  if (weighted) records = LoadConfidenceRecords(run.out() / RoundDir(round) / confidence);
  mix.seed = run.Seed(round, Stage::kMix, RoundDir(round) + ".mix");
  const MixedCorpus corpus(c.authentic, synthetic, weighted ? &records : nullptr, mix);
  std::optional<std::filesystem::path> init;
  if (spec.fine_tune && round > 1) init = RoundDir(round - 1) + "/forward.ckpt";
  const auto seed = run.Seed(round, Stage::kForward, RoundDir(round) + ".forward");
  const TrainResult r = TrainDirection(run, rec, c, false, [&](std::size_t e) { return corpus.Epoch(e); }, seed,
                                       dir, "forward", init, &mix);
  nlohmann::json info = TrainInfo(r);
  info["synthetic_pairs"] = corpus.synthetic_size();
  info["synthetic_per_epoch"] = corpus.synthetic_per_epoch();
  info["dropped_empty"] = corpus.dropped_empty();
  return info;
}

/// Translates `sources` with a source-to-target checkpoint and returns the
/// word-level hypotheses.
inline std::vector<Tokens> TranslateIds(const ModelCheckpoint& ck, const PreparedCorpora& c,
                                        const std::vector<TokenIds>& sources, const DecodeConfig& decode,
                                        std::size_t threads) {
  const Transformer model(ck.config);
  const Decoder decoder(model, ck.params);
  const RngStream root(decode.seed, 0x5b);
  std::vector<Tokens> hyps(sources.size());
  ParallelFor(sources.size(), threads, [&](std::size_t i) {
    if (sources[i].empty()) return;
    RngStream rng = root.Substream(i);
    hyps[i] = c.TargetWords(decoder.Run(sources[i], decode, rng).tokens);
  });
  return hyps;
}

inline nlohmann::json EvaluateStage(PipelineRunner& run, StageRecord& rec, const PreparedCorpora& c,
                                    std::size_t round, const std::string& dir) {
  const PipelineSpec& spec = run.spec();
  const auto ck = ModelCheckpoint::Load(run.out() / dir / "forward.ckpt");
  DecodeConfig decode = spec.evaluation;
  decode.seed = run.Seed(round, Stage::kEvaluate, RoundDir(round) + ".evaluate");
  const auto hyps = TranslateIds(ck, c, c.test_source, decode, spec.threads);
  std::vector<std::string> lines;
  for (const auto& h : hyps) lines.push_back(Join(h));
  WriteLines(run.out() / dir / "test.hyp", lines);
  run.Output(rec, dir + "/test.hyp");
  return Bleu(lines, c.test_references);
}

template <class Body>
auto Guarded(PipelineRunner& run, Body&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    run.MarkFailed(e);
    throw;
  }
}

}  // namespace detail

/// Back-translation: reverse model, synthetic generation, optional
/// confidence scoring, forward model, evaluation; repeated `iterations`
/// times. Artifacts and manifest.json go to spec.output_dir. Rerunning
/// with the same config and inputs reuses completed stages.
inline ExperimentManifest RunBackTranslation(const PipelineSpec& spec, const PipelineHooks& hooks = {}) {
  detail::PipelineRunner run(spec, hooks);
  run.RecordSeeds(spec.iterations);
  return detail::Guarded(run, [&] {
    run.RunStage("prepare", 0, [&](StageRecord& rec) { return detail::PrepareStage(run, rec); });
    const PreparedCorpora c = detail::LoadCorpora(run.spec(), run.out());
    nlohmann::json rounds = nlohmann::json::array();
    for (std::size_t r = 1; r <= run.spec().iterations; ++r) {
      if (r > 1) {
        run.RunStage("source_generate", r,
                     [&](StageRecord& rec) { return detail::SourceGenerateStage(run, rec, c, r); });
      }
      run.RunStage("reverse", r, [&](StageRecord& rec) { return detail::ReverseStage(run, rec, c, r); });
      run.RunStage("generate", r, [&](StageRecord& rec) { return detail::GenerateStage(run, rec, c, r); });
      if (run.spec().confidence.enabled) {
        run.RunStage("score", r, [&](StageRecord& rec) {
          return detail::ScoreStage(run, rec, r, run.spec().confidence.measure);
        });
      }
      run.RunStage("forward", r, [&](StageRecord& rec) {
        return detail::ForwardStage(run, rec, c, r, detail::RoundDir(r), run.spec().mix,
                                    std::numeric_limits<std::size_t>::max());
      });
      if (run.spec().has_test()) {
        const auto report = run.RunStage(
            "evaluate", r, [&](StageRecord& rec) { return detail::EvaluateStage(run, rec, c, r, detail::RoundDir(r)); });
        rounds.push_back({{"round", r}, {"bleu", report}});
        run.manifest().metrics["bleu"] = report.at("bleu");
      }
    }
    run.manifest().metrics["rounds"] = rounds;
    run.manifest().status = "complete";
    run.Save();
    return run.manifest();
  });
}

// ---------------------------------------------------------------------------
// Corpus-size sweep

struct SweepRow {
  std::size_t size = 0;
  double baseline = 0.0;
  double weighted = 0.0;
};

struct SweepResult {
  std::string weighted_label;
  std::vector<SweepRow> rows;

  std::string Table() const {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> values;
    for (const auto& r : rows) {
      labels.push_back(std::to_string(r.size));
      values.push_back({r.baseline, r.weighted});
    }
    return FormatTable(labels, {"baseline", weighted_label}, values);
  }
};

inline void to_json(nlohmann::json& j, const SweepResult& s) {
  j = nlohmann::json::array();
  for (const auto& r : s.rows) j.push_back({{"size", r.size}, {"baseline", r.baseline}, {s.weighted_label, r.weighted}});
}

/// Test BLEU against synthetic corpus size with the authentic corpus fixed.
/// One reverse model and synthetic corpus serve every size; size n trains
/// on the first n synthetic pairs. Writes sweep.json and sweep.txt.
inline SweepResult CorpusSizeSweep(const PipelineSpec& spec, const std::vector<std::size_t>& sizes,
                                   const PipelineHooks& hooks = {}) {
  if (sizes.empty()) Fail(ErrorKind::kConfig, "sweep needs at least one size");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) Fail(ErrorKind::kConfig, "sweep sizes must be strictly ascending");
  }
  if (!spec.has_test()) Fail(ErrorKind::kConfig, "sweep needs a test set");
  if (!spec.confidence.enabled) Fail(ErrorKind::kConfig, "sweep needs a confidence measure for the weighted variant");
  detail::PipelineRunner run(spec, hooks, {{"sweep_sizes", sizes}});
  run.RecordSeeds(1);
  return detail::Guarded(run, [&] {
    run.RunStage("prepare", 0, [&](StageRecord& rec) { return detail::PrepareStage(run, rec); });
    const PreparedCorpora c = detail::LoadCorpora(run.spec(), run.out());
    run.RunStage("reverse", 1, [&](StageRecord& rec) { return detail::ReverseStage(run, rec, c, 1); });
    const auto gen = run.RunStage("generate", 1, [&](StageRecord& rec) { return detail::GenerateStage(run, rec, c, 1); });
    run.RunStage("score", 1, [&](StageRecord& rec) {
      return detail::ScoreStage(run, rec, 1, run.spec().confidence.measure);
    });
    const std::size_t available = gen.at("generated").get<std::size_t>();
    if (sizes.back() > available) {
      Fail(ErrorKind::kValue, "sweep size ", sizes.back(), " exceeds the ", available, " synthetic pairs");
    }
    SweepResult result;
    result.weighted_label = ToString(run.spec().confidence.measure.kind);
    MixConfig weighted = run.spec().mix;
    if (!weighted.use_sentence_confidence && !weighted.use_word_confidence) {
      weighted.use_sentence_confidence = weighted.use_word_confidence = true;
    }
    MixConfig baseline = run.spec().mix;
    baseline.use_sentence_confidence = baseline.use_word_confidence = false;
    for (std::size_t n : sizes) {
      SweepRow row{n, 0.0, 0.0};
      for (int variant = 0; variant < 2; ++variant) {
        const std::string label = variant == 0 ? "baseline" : result.weighted_label;
        const std::string dir = "sweep/" + label + "_" + std::to_string(n);
        const MixConfig& mix = variant == 0 ? baseline : weighted;
        run.RunStage("forward." + label + "." + std::to_string(n), 1, [&](StageRecord& rec) {
          return detail::ForwardStage(run, rec, c, 1, dir, mix, n);
        });
        const auto report = run.RunStage("evaluate." + label + "." + std::to_string(n), 1, [&](StageRecord& rec) {
          return detail::EvaluateStage(run, rec, c, 1, dir);
        });
        (variant == 0 ? row.baseline : row.weighted) = report.at("bleu").get<double>();
      }
      result.rows.push_back(row);
    }
    WriteFileBytes(run.out() / "sweep.json", nlohmann::json(result).dump(2) + "\n");
    WriteFileBytes(run.out() / "sweep.txt", result.Table());
    run.manifest().metrics["sweep"] = result;
    run.manifest().status = "complete";
    run.Save();
    return result;
  });
}

// ---------------------------------------------------------------------------
// Condition comparison

/// One forward-training variant: the measure that scores the synthetic
/// corpus (none: unweighted) and which confidences the training uses.
struct Condition {
  std::string label;
  std::optional<Measure> measure;
  bool sentence = false;
  bool word = false;
};

/// "none", "<measure>" (word and sentence), "<measure>:s", "<measure>:w"
/// or "<measure>:ws". The label is the text itself.
inline Condition ParseCondition(const std::string& text) {
  Condition c;
  c.label = text;
  if (text == "none") return c;
  const auto colon = text.find(':');
  c.measure = ParseMeasure(text.substr(0, colon));
  const std::string levels = colon == std::string::npos ? "ws" : text.substr(colon + 1);
  if (levels != "s" && levels != "w" && levels != "ws" && levels != "sw") {
    Fail(ErrorKind::kConfig, "condition '", text, "': levels must be s, w or ws");
  }
  c.sentence = levels.find('s') != std::string::npos;
  c.word = levels.find('w') != std::string::npos;
  return c;
}

struct ComparisonResult {
  std::vector<std::string> labels;
  std::vector<double> bleu;

  std::string Table() const {
    std::vector<std::vector<double>> values;
    for (double b : bleu) values.push_back({b});
    return FormatTable(labels, {"BLEU"}, values);
  }

  double At(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return bleu[i];
    Fail(ErrorKind::kValue, "no condition '", label, "'");
  }
};

inline void to_json(nlohmann::json& j, const ComparisonResult& r) {
  j = nlohmann::json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i) j[r.labels[i]] = r.bleu[i];
}

/// Test BLEU of several forward models that share one reverse model and
/// synthetic corpus. Each measure scores the corpus once with the same
/// dropout masks; every forward model uses the same mixing and training
/// seeds. Writes compare.json and compare.txt.
inline ComparisonResult CompareConditions(const PipelineSpec& spec, const std::vector<Condition>& conditions,
                                          const PipelineHooks& hooks = {}) {
  if (conditions.empty()) Fail(ErrorKind::kConfig, "comparison needs at least one condition");
  if (!spec.has_test()) Fail(ErrorKind::kConfig, "comparison needs a test set");
  std::vector<std::string> labels;
  std::vector<Measure> measures;
  for (const auto& c : conditions) {
    if (c.label.empty() || c.label.find_first_of("/\\ ") != std::string::npos) {
      Fail(ErrorKind::kConfig, "bad condition label '", c.label, "'");
    }
    if (std::find(labels.begin(), labels.end(), c.label) != labels.end()) {
      Fail(ErrorKind::kConfig, "duplicate condition '", c.label, "'");
    }
    labels.push_back(c.label);
    if (!c.measure && (c.sentence || c.word)) Fail(ErrorKind::kConfig, "condition '", c.label, "' weights without a measure");
    if (c.measure && !c.sentence && !c.word) Fail(ErrorKind::kConfig, "condition '", c.label, "' uses no confidence");
    if (c.measure && std::find(measures.begin(), measures.end(), *c.measure) == measures.end()) {
      measures.push_back(*c.measure);
    }
  }
  detail::PipelineRunner run(spec, hooks, {{"conditions", labels}});
  run.RecordSeeds(1);
  return detail::Guarded(run, [&] {
    run.RunStage("prepare", 0, [&](StageRecord& rec) { return detail::PrepareStage(run, rec); });
    const PreparedCorpora c = detail::LoadCorpora(run.spec(), run.out());
    run.RunStage("reverse", 1, [&](StageRecord& rec) { return detail::ReverseStage(run, rec, c, 1); });
    run.RunStage("generate", 1, [&](StageRecord& rec) { return detail::GenerateStage(run, rec, c, 1); });
    for (Measure m : measures) {
      MeasureConfig mc = run.spec().confidence.measure;
      mc.kind = m;
      run.RunStage("score." + ToString(m), 1, [&](StageRecord& rec) {
        return detail::ScoreStage(run, rec, 1, mc, "confidence." + ToString(m) + ".jsonl");
      });
    }
    ComparisonResult result;
    for (const auto& cond : conditions) {
      MixConfig mix = run.spec().mix;
      mix.use_sentence_confidence = cond.sentence;
      mix.use_word_confidence = cond.word;
      const std::string dir = "compare/" + cond.label;
      const std::string records = cond.measure ? "confidence." + ToString(*cond.measure) + ".jsonl" : "";
      run.RunStage("forward." + cond.label, 1, [&](StageRecord& rec) {
        return detail::ForwardStage(run, rec, c, 1, dir, mix, std::numeric_limits<std::size_t>::max(), records);
      });
      const auto report = run.RunStage("evaluate." + cond.label, 1, [&](StageRecord& rec) {
        return detail::EvaluateStage(run, rec, c, 1, dir);
      });
      result.labels.push_back(cond.label);
      result.bleu.push_back(report.at("bleu").get<double>());
    }
    WriteFileBytes(run.out() / "compare.json", nlohmann::json(result).dump(2) + "\n");
    WriteFileBytes(run.out() / "compare.txt", result.Table());
    run.manifest().metrics["compare"] = result;
    run.manifest().status = "complete";
    run.Save();
    return result;
  });
}

}  // namespace confbt
