// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "confbt/confidence/scoring.hpp"
#include "confbt/data/bpe.hpp"
#include "confbt/data/text.hpp"
#include "confbt/data/vocab.hpp"
#include "confbt/decode/decode.hpp"
#include "confbt/eval/bleu.hpp"
#include "confbt/model/checkpoint.hpp"
#include "confbt/pipeline/back_translation.hpp"
#include "confbt/training/mix.hpp"
#include "confbt/training/trainer.hpp"
#include "confbt/util/version.hpp"

namespace confbt::cli {

namespace fs = std::filesystem;

/// Environment variable naming the default pipeline output directory.
inline constexpr const char* kOutputDirEnv = "CONFBT_OUTPUT_DIR";

struct TrainArgs {
  std::string config, src, tgt, src_vocab, tgt_vocab, output, log, init;
  std::string synthetic_src, synthetic_tgt, confidence, ratio = "1:1";
  bool sentence = false, word = false;
  std::optional<std::size_t> steps, batch_tokens;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr_scale, label_smoothing, dropout;
};

struct TranslateArgs {
  std::string checkpoint, src_vocab, tgt_vocab, input, output, src_bpe, tgt_bpe, pairs;
  std::string mode = "search";
  std::size_t beam = 4, max_len = 64, top_k = 0;
  double temperature = 1.0, length_penalty = 0.6, top_p = 1.0;
  std::uint64_t seed = 0;
};

struct ScoreArgs {
  std::string checkpoint, input, prediction, input_vocab, prediction_vocab, output, dump;
  std::string measure = "cev";
  std::size_t k = 20, chunk = 64;
  double alpha = 2.0, beta = 2.0, dropout = 0.1;
  bool length_normalized = false;
  std::uint64_t seed = 0;
};

struct PipelineArgs {
  std::string config, output_dir, measure, mode, sweep, compare;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k, iterations;
};

struct EvalArgs {
  std::string hyp, ref, hyp_b, json;
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  bool tokenize = false;
};

struct BpeArgs {
  std::vector<std::string> inputs;
  std::string input, output, model, vocab;
  std::size_t merges = 1000, min_frequency = 2;
  bool undo = false;
};

/// The confbt command line. Output goes to `out`, warnings and the
/// machine-readable error line to `err`.
class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err), app_("confbt: confidence-aware back-translation") {
    app_.set_version_flag("--version", std::string("confbt ") + kVersion, "Print the version and exit");
    app_.set_help_flag("-h,--help", "Print this help message and exit");
    app_.add_option("--threads", threads_, "Maximum worker threads")->check(CLI::PositiveNumber);
    app_.require_subcommand(1);
    AddTrain();
    AddTranslate();
    AddScore();
    AddPipeline();
    AddEval();
    AddBpe();
  }

  CLI::App& app() { return app_; }

  /// Parses and runs. Exit codes: 0 success, 1 runtime failure, 2 usage.
  int Run(int argc, const char* const* argv) {
    try {
      app_.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      out_ << app_.help();
      return 0;
    } catch (const CLI::CallForAllHelp& e) {
      out_ << app_.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::CallForVersion& e) {
      out_ << app_.version() << "\n";
      return 0;
    } catch (const CLI::ParseError& e) {
      ErrorLine("usage", e.what());
      return 2;
    }
    try {
      command_();
      return 0;
    } catch (const Error& e) {
      ErrorLine(std::string(ErrorKindName(e.kind())), e.what());
    } catch (const std::exception& e) {
      ErrorLine("internal", e.what());
    }
    return 1;
  }

 private:
  void ErrorLine(const std::string& kind, const std::string& message) {
    err_ << "error: " << nlohmann::json{{"kind", kind}, {"message", message}}.dump() << "\n";
  }

  CLI::App* Sub(const char* name, const char* desc) {
    CLI::App* s = app_.add_subcommand(name, desc);
    s->set_help_flag("-h,--help", "Print this help message and exit");
    return s;
  }

  // -- train ---------------------------------------------------------------

  void AddTrain() {
    auto* s = Sub("train", "Train a translation model with MLE, optionally on confidence-weighted synthetic data");
    auto& a = train_;
    s->add_option("--config", a.config, "JSON file with \"model\" and \"training\" sections")->check(CLI::ExistingFile);
    s->add_option("--src", a.src, "Source side of the authentic corpus (segmented, space separated)")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("--tgt", a.tgt, "Target side of the authentic corpus")->required()->check(CLI::ExistingFile);
    s->add_option("--src-vocab", a.src_vocab, "Source vocabulary; built from the data and saved next to --output if absent");
    s->add_option("--tgt-vocab", a.tgt_vocab, "Target vocabulary; built from the data and saved next to --output if absent");
    s->add_option("-o,--output", a.output, "Checkpoint to write")->required();
    s->add_option("--log", a.log, "CSV training log (step,loss,lr)");
    s->add_option("--init", a.init, "Checkpoint whose parameters start training")->check(CLI::ExistingFile);
    s->add_option("--synthetic-src", a.synthetic_src, "Back-translated source side; line i has pair id i")
        ->check(CLI::ExistingFile);
    s->add_option("--synthetic-tgt", a.synthetic_tgt, "Target side of the synthetic corpus")->check(CLI::ExistingFile);
    s->add_option("--confidence", a.confidence, "Confidence records (JSON lines) for the synthetic pairs")
        ->check(CLI::ExistingFile);
    s->add_flag("--sentence-confidence", a.sentence, "Weight synthetic pairs by sentence confidence");
    s->add_flag("--word-confidence", a.word, "Scale attention by word confidence");
    s->add_option("--ratio", a.ratio, "Authentic:synthetic mixing ratio, e.g. 1:1");
    s->add_option("--steps", a.steps, "Override training.max_steps");
    s->add_option("--batch-tokens", a.batch_tokens, "Override training.batch_tokens");
    s->add_option("--seed", a.seed, "Override training.seed");
    s->add_option("--lr-scale", a.lr_scale, "Override training.lr_scale");
    s->add_option("--label-smoothing", a.label_smoothing, "Override the label smoothing rate");
    s->add_option("--dropout", a.dropout, "Override the dropout rate");
    s->callback([this] { command_ = [this] { Train(); }; });
  }

  static std::vector<TokenIds> EncodeFile(const Vocab& v, const std::string& path) {
    std::vector<TokenIds> out;
    for (const auto& l : ReadLines(path)) out.push_back(v.Encode(SplitSpaces(l)));
    return out;
  }

  static Vocab VocabFor(const std::string& path, const std::vector<std::string>& files) {
    if (!path.empty()) return Vocab::Load(path);
    std::vector<Tokens> corpus;
    for (const auto& f : files)
      for (const auto& l : ReadLines(f)) corpus.push_back(SplitSpaces(l));
    return Vocab::Build(corpus);
  }

  static std::pair<double, double> ParseRatio(const std::string& r) {
    const auto colon = r.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(r);
      return {std::stod(r.substr(0, colon)), std::stod(r.substr(colon + 1))};
    } catch (const std::exception&) {
      Fail(ErrorKind::kConfig, "bad ratio '", r, "' (expected a:s)");
    }
  }

  void Train() {
    const auto& a = train_;
    ModelConfig model;
    TrainingConfig training;
    if (!a.config.empty()) {
      const auto j = nlohmann::json::parse(ReadFileBytes(a.config));
      for (const auto& [key, value] : j.items()) {
        if (key != "model" && key != "training") Fail(ErrorKind::kConfig, a.config, ": unknown key '", key, "'");
      }
      model = FromJsonWithDefaults<ModelConfig>(j.value("model", nlohmann::json()), "model");
      training = FromJsonWithDefaults<TrainingConfig>(j.value("training", nlohmann::json()), "training");
    }
    if (a.steps) training.max_steps = *a.steps;
    if (a.batch_tokens) training.batch_tokens = *a.batch_tokens;
    if (a.seed) training.seed = *a.seed;
    if (a.lr_scale) training.lr_scale = *a.lr_scale;
    if (a.label_smoothing) training.label_smoothing = *a.label_smoothing;
    if (a.dropout) training.dropout = *a.dropout;
    training.threads = threads_;
    const bool has_synth = !a.synthetic_src.empty() || !a.synthetic_tgt.empty();
    if (has_synth && (a.synthetic_src.empty() || a.synthetic_tgt.empty())) {
      Fail(ErrorKind::kConfig, "--synthetic-src and --synthetic-tgt go together");
    }
    if ((a.sentence || a.word) && a.confidence.empty()) {
      Fail(ErrorKind::kConfig, "confidence weighting requested without --confidence");
    }
    if (!a.confidence.empty() && !has_synth) Fail(ErrorKind::kConfig, "--confidence needs a synthetic corpus");

    std::vector<std::string> src_files{a.src}, tgt_files{a.tgt};
    if (has_synth) {
      src_files.push_back(a.synthetic_src);
      tgt_files.push_back(a.synthetic_tgt);
    }
    const Vocab sv = VocabFor(a.src_vocab, src_files), tv = VocabFor(a.tgt_vocab, tgt_files);
    if (a.src_vocab.empty()) sv.Save(a.output + ".src.vocab");
    if (a.tgt_vocab.empty()) tv.Save(a.output + ".tgt.vocab");
    model.src_vocab = sv.size();
    model.tgt_vocab = tv.size();

    const auto src = EncodeFile(sv, a.src), tgt = EncodeFile(tv, a.tgt);
    if (src.size() != tgt.size()) Fail(ErrorKind::kFormat, "--src and --tgt have different line counts");
    std::vector<ParallelPair> authentic;
    for (std::size_t i = 0; i < src.size(); ++i) authentic.push_back({src[i], tgt[i]});
    std::vector<SyntheticPair> synthetic;
    if (has_synth) {
      const auto ss = EncodeFile(sv, a.synthetic_src), st = EncodeFile(tv, a.synthetic_tgt);
      if (ss.size() != st.size()) Fail(ErrorKind::kFormat, "synthetic files have different line counts");
      for (std::size_t i = 0; i < ss.size(); ++i) synthetic.push_back({std::to_string(i), ss[i], st[i], {}, false});
    }
    std::unordered_map<std::string, ConfidenceRecord> records;
    if (!a.confidence.empty()) records = LoadConfidenceRecords(a.confidence);
    MixConfig mix;
    std::tie(mix.authentic_ratio, mix.synthetic_ratio) = ParseRatio(a.ratio);
    if (!has_synth) mix.synthetic_ratio = 0.0;
    mix.use_sentence_confidence = training.use_sentence_confidence = a.sentence;
    mix.use_word_confidence = training.use_word_confidence = a.word;
    mix.seed = training.seed;
    const MixedCorpus corpus(std::move(authentic), synthetic, records.empty() ? nullptr : &records, mix);

    TrainHooks hooks;
    if (!a.log.empty()) hooks.log_path = a.log;
    if (!a.init.empty()) hooks.init = ModelCheckpoint::Load(a.init).params;
    hooks.src_vocab_hash = sv.Hash();
    hooks.tgt_vocab_hash = tv.Hash();
    const auto r = TrainMle([&](std::size_t e) { return corpus.Epoch(e); }, model, training, hooks);
    r.checkpoint.Save(a.output);
    out_ << "steps " << r.steps << " epochs " << r.epochs;
    if (!r.log.empty()) out_ << " loss " << std::setprecision(6) << r.log.back().loss;
    out_ << (r.diverged ? " diverged" : "") << "\n";
    if (r.diverged) Fail(ErrorKind::kValue, "training diverged; wrote the last finite parameters to ", a.output);
  }

  // -- translate -----------------------------------------------------------

  void AddTranslate() {
    auto* s = Sub("translate", "Translate a file with a trained checkpoint");
    auto& a = translate_;
    s->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    s->add_option("--src-vocab", a.src_vocab, "Vocabulary of the input language")->required()->check(CLI::ExistingFile);
    s->add_option("--tgt-vocab", a.tgt_vocab, "Vocabulary of the output language")->required()->check(CLI::ExistingFile);
    s->add_option("-i,--input", a.input, "Input text, one sentence per line")->required()->check(CLI::ExistingFile);
    s->add_option("-o,--output", a.output, "Output translations, line aligned with the input")->required();
    s->add_option("--src-bpe", a.src_bpe, "Tokenize and segment raw input with this BPE model")->check(CLI::ExistingFile);
    s->add_option("--tgt-bpe", a.tgt_bpe, "Undo this BPE segmentation on the output")->check(CLI::ExistingFile);
    s->add_option("--pairs", a.pairs, "Also write JSON-lines pairs with per-step log-probabilities");
    s->add_option("--mode", a.mode, "Decoding mode")->check(CLI::IsMember({"search", "sample", "greedy"}));
    s->add_option("--beam", a.beam, "Beam size for search")->check(CLI::PositiveNumber);
    s->add_option("--temperature", a.temperature, "Sampling temperature");
    s->add_option("--top-k", a.top_k, "Sample from the k most likely tokens (0: all)");
    s->add_option("--top-p", a.top_p, "Nucleus sampling mass (1: off)");
    s->add_option("--max-len", a.max_len, "Maximum output symbols including </s>");
    s->add_option("--length-penalty", a.length_penalty, "Length penalty exponent for search");
    s->add_option("--seed", a.seed, "Sampling seed");
    s->callback([this] { command_ = [this] { Translate(); }; });
  }

  static void CheckVocabs(const ModelCheckpoint& ck, const Vocab& in, const Vocab& out, const char* what) {
    if ((!ck.src_vocab_hash.empty() && ck.src_vocab_hash != in.Hash()) ||
        (!ck.tgt_vocab_hash.empty() && ck.tgt_vocab_hash != out.Hash())) {
      Fail(ErrorKind::kVocab, what, " vocabularies do not match the checkpoint");
    }
  }

  void Translate() {
    const auto& a = translate_;
    DecodeConfig cfg;
    cfg.mode = ParseDecodeMode(a.mode);
    cfg.beam_size = a.beam;
    cfg.temperature = a.temperature;
    cfg.top_k = a.top_k;
    cfg.top_p = a.top_p;
    cfg.max_len = a.max_len;
    cfg.length_penalty = a.length_penalty;
    cfg.seed = a.seed;
    cfg.Validate();
    const auto ck = ModelCheckpoint::Load(a.checkpoint);
    const Vocab sv = Vocab::Load(a.src_vocab), tv = Vocab::Load(a.tgt_vocab);
    CheckVocabs(ck, sv, tv, "--src-vocab/--tgt-vocab");
    std::optional<BpeModel> sb, tb;
    if (!a.src_bpe.empty()) sb = BpeModel::Load(a.src_bpe);
    if (!a.tgt_bpe.empty()) tb = BpeModel::Load(a.tgt_bpe);
    std::vector<TokenIds> inputs;
    for (const auto& l : ReadLines(a.input)) inputs.push_back(sv.Encode(sb ? sb->Apply(Tokenize(l)) : SplitSpaces(l)));
    const Transformer model(ck.config);
    const Decoder decoder(model, ck.params);
    const RngStream root(cfg.seed, 0x5a);
    std::vector<Hypothesis> hyps(inputs.size());
    ParallelFor(inputs.size(), threads_, [&](std::size_t i) {
      if (inputs[i].empty() || inputs[i].size() + 1 > ck.config.max_len) return;
      RngStream rng = root.Substream(i);
      hyps[i] = decoder.Run(inputs[i], cfg, rng);
    });
    std::vector<std::string> lines;
    std::optional<JsonLinesWriter> pairs;
    if (!a.pairs.empty()) pairs.emplace(a.pairs, false);
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].empty() && inputs[i].size() + 1 > ck.config.max_len) ++skipped;
      const Tokens words = tv.Decode(hyps[i].tokens);
      lines.push_back(Join(tb ? tb->Undo(words) : words));
      if (pairs) pairs->Write(SyntheticPair{std::to_string(i), hyps[i].tokens, inputs[i], hyps[i].step_logprobs, hyps[i].truncated});
    }
    WriteLines(a.output, lines);
    if (skipped) err_ << "warning: " << skipped << " inputs exceed the model length limit; wrote empty lines\n";
  }

  // -- score ---------------------------------------------------------------

  void AddScore() {
    auto* s = Sub("score", "Score back-translations with uncertainty-based confidence");
    auto& a = score_;
    s->add_option("--checkpoint", a.checkpoint, "Reverse (target-to-source) checkpoint that produced the predictions")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("-i,--input", a.input, "Sentences that were translated (segmented)")->required()->check(CLI::ExistingFile);
    s->add_option("--prediction", a.prediction, "Their translations, line aligned (segmented)")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("--input-vocab", a.input_vocab, "Vocabulary of --input")->required()->check(CLI::ExistingFile);
    s->add_option("--prediction-vocab", a.prediction_vocab, "Vocabulary of --prediction")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("-o,--output", a.output, "Confidence records (JSON lines); an existing file is resumed")->required();
    s->add_option("--dump", a.dump, "Also write raw per-pass probabilities (JSON lines)");
    s->add_option("--measure", a.measure, "Confidence measure")->check(CLI::IsMember({"ptp", "exp", "var", "cev"}));
    s->add_option("--k", a.k, "Monte Carlo dropout passes (ignored by ptp)")->check(CLI::PositiveNumber);
    s->add_option("--alpha", a.alpha, "Variance sharpness for var");
    s->add_option("--beta", a.beta, "Variance sharpness for cev");
    s->add_option("--dropout", a.dropout, "Dropout rate during the Monte Carlo passes");
    s->add_flag("--length-normalized", a.length_normalized, "Use the per-token geometric mean for sentence probabilities");
    s->add_option("--chunk", a.chunk, "Pairs scored between file appends")->check(CLI::PositiveNumber);
    s->add_option("--seed", a.seed, "Dropout mask seed");
    s->callback([this, s] {
      k_given_ = s->get_option("--k")->count() > 0;
      command_ = [this] { Score(); };
    });
  }

  void Score() {
    const auto& a = score_;
    ScoringConfig cfg;
    cfg.measure.kind = ParseMeasure(a.measure);
    cfg.measure.alpha = a.alpha;
    cfg.measure.beta = a.beta;
    cfg.measure.Validate();
    cfg.mc.k = a.k;
    cfg.mc.dropout = a.dropout;
    cfg.mc.length_normalized = a.length_normalized;
    cfg.seed = a.seed;
    cfg.threads = threads_;
    cfg.chunk = a.chunk;
    if (!a.dump.empty()) cfg.dump_path = a.dump;
    if (cfg.measure.kind == Measure::kPtp && k_given_) {
      err_ << "warning: --k is ignored for measure ptp (no sampling)\n";
    }
    const auto ck = ModelCheckpoint::Load(a.checkpoint);
    const Vocab iv = Vocab::Load(a.input_vocab), pv = Vocab::Load(a.prediction_vocab);
    CheckVocabs(ck, iv, pv, "--input-vocab/--prediction-vocab");
    const auto ys = EncodeFile(iv, a.input), xs = EncodeFile(pv, a.prediction);
    if (ys.size() != xs.size()) Fail(ErrorKind::kFormat, "--input and --prediction have different line counts");
    std::vector<SyntheticPair> pairs;
    for (std::size_t i = 0; i < ys.size(); ++i) pairs.push_back({std::to_string(i), xs[i], ys[i], {}, false});
    const Transformer model(ck.config);
    const auto records = ScoreCorpus(model, ck.params, pairs, cfg, a.output);
    double sum = 0.0;
    for (const auto& r : records) sum += r.sentence_confidence;
    out_ << "scored " << records.size() << " mean_sentence_confidence " << std::setprecision(6)
         << (records.empty() ? 0.0 : sum / static_cast<double>(records.size())) << "\n";
  }

  // -- pipeline ------------------------------------------------------------

  void AddPipeline() {
    auto* s = Sub("pipeline", "Run the full back-translation pipeline and write a manifest");
    auto& a = pipeline_;
    s->add_option("--config", a.config, "Pipeline JSON config; relative paths resolve against its directory")
        ->required()
        ->check(CLI::ExistingFile);
    s->add_option("--output-dir", a.output_dir,
                  std::string("Run directory (default: config output_dir, then $") + kOutputDirEnv + ")");
    s->add_option("--seed", a.seed, "Override the master seed");
    s->add_option("--measure", a.measure, "Override the confidence measure")
        ->check(CLI::IsMember({"none", "ptp", "exp", "var", "cev"}));
    s->add_option("--k", a.k, "Override the Monte Carlo pass count")->check(CLI::PositiveNumber);
    s->add_option("--iterations", a.iterations, "Override the back-translation round count")->check(CLI::PositiveNumber);
    s->add_option("--mode", a.mode, "Override the generation mode")->check(CLI::IsMember({"search", "sample", "greedy"}));
    auto* sweep =
        s->add_option("--sweep", a.sweep, "Comma-separated ascending synthetic corpus sizes; runs the size sweep instead");
    s->add_option("--compare", a.compare,
                  "Comma-separated conditions (none, ptp, exp:s, cev:w, cev:ws, ...) trained on one shared synthetic "
                  "corpus; runs the comparison instead")
        ->excludes(sweep);
    s->callback([this] { command_ = [this] { Pipeline(); }; });
  }

 public:
  /// Resolved spec for `pipeline`: file values, then flags, then defaults
  /// for the output directory.
  PipelineSpec ResolvePipelineSpec() const {
    const auto& a = pipeline_;
    auto j = nlohmann::json::parse(ReadFileBytes(a.config));
    PipelineSpec spec = j.get<PipelineSpec>();
    const fs::path base = fs::absolute(a.config).parent_path();
    for (fs::path* p : {&spec.authentic_source, &spec.authentic_target, &spec.monolingual, &spec.source_monolingual,
                        &spec.test_source, &spec.test_target, &spec.output_dir}) {
      if (!p->empty() && p->is_relative()) *p = (base / *p).lexically_normal();
    }
    if (!a.output_dir.empty()) spec.output_dir = fs::absolute(a.output_dir).lexically_normal();
    if (spec.output_dir.empty()) {
      const char* env = std::getenv(kOutputDirEnv);
      if (!env || !*env) Fail(ErrorKind::kConfig, "no output directory: set output_dir, --output-dir or $", kOutputDirEnv);
      spec.output_dir = fs::absolute(env).lexically_normal();
    }
    if (a.seed) spec.seed = *a.seed;
    if (!a.measure.empty()) {
      spec.confidence.enabled = a.measure != "none";
      if (spec.confidence.enabled) spec.confidence.measure.kind = ParseMeasure(a.measure);
      if (!spec.confidence.enabled) spec.mix.use_sentence_confidence = spec.mix.use_word_confidence = false;
    }
    if (a.k) spec.confidence.mc.k = *a.k;
    if (a.iterations) spec.iterations = *a.iterations;
    if (!a.mode.empty()) spec.generation.mode = ParseDecodeMode(a.mode);
    spec.threads = threads_;
    spec.Validate();
    return spec;
  }

 private:
  static std::vector<std::string> SplitCommas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  }

  static std::vector<std::size_t> ParseSizes(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& item : SplitCommas(s)) {
      try {
        std::size_t pos = 0;
        out.push_back(std::stoul(item, &pos));
        if (pos != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        Fail(ErrorKind::kConfig, "bad sweep size '", item, "'");
      }
    }
    return out;
  }

  void Pipeline() {
    const PipelineSpec spec = ResolvePipelineSpec();
    if (!pipeline_.sweep.empty()) {
      const auto result = CorpusSizeSweep(spec, ParseSizes(pipeline_.sweep));
      out_ << result.Table();
      out_ << "manifest " << (spec.output_dir / "manifest.json").string() << "\n";
      return;
    }
    if (!pipeline_.compare.empty()) {
      std::vector<Condition> conditions;
      for (const auto& item : SplitCommas(pipeline_.compare)) conditions.push_back(ParseCondition(item));
      out_ << CompareConditions(spec, conditions).Table();
      out_ << "manifest " << (spec.output_dir / "manifest.json").string() << "\n";
      return;
    }
    const auto m = RunBackTranslation(spec);
    out_ << "manifest " << (spec.output_dir / "manifest.json").string() << "\n";
    if (m.metrics.contains("bleu")) {
      out_ << "bleu " << std::fixed << std::setprecision(2) << m.metrics["bleu"].get<double>() << "\n";
      out_ << std::defaultfloat;
    }
  }

  // -- eval ----------------------------------------------------------------

  void AddEval() {
    auto* s = Sub("eval", "Corpus BLEU, optionally with paired bootstrap significance");
    auto& a = eval_;
    s->add_option("--hyp", a.hyp, "Candidate translations, one per line")->required()->check(CLI::ExistingFile);
    s->add_option("--ref", a.ref, "References, line aligned")->required()->check(CLI::ExistingFile);
    s->add_option("--hyp-b", a.hyp_b, "Second system to compare against --hyp")->check(CLI::ExistingFile);
    s->add_option("--resamples", a.resamples, "Bootstrap resamples")->check(CLI::PositiveNumber);
    s->add_option("--seed", a.seed, "Bootstrap seed");
    s->add_option("--json", a.json, "Write the report as JSON");
    s->add_flag("--tokenize", a.tokenize, "Split punctuation before scoring (default: whitespace only)");
    s->callback([this] { command_ = [this] { Eval(); }; });
  }

  void Eval() {
    const auto& a = eval_;
    auto load = [&](const std::string& path) {
      auto lines = ReadLines(path);
      if (a.tokenize)
        for (auto& l : lines) l = Join(Tokenize(l));
      return lines;
    };
    const auto refs = load(a.ref);
    const auto hyp = load(a.hyp);
    const BleuReport ra = Bleu(hyp, refs);
    nlohmann::json report = {{"a", ra}};
    std::vector<std::string> rows{"A"};
    std::vector<std::vector<double>> values{{ra.score}};
    std::optional<SignificanceReport> sig;
    if (!a.hyp_b.empty()) {
      const auto hyp_b = load(a.hyp_b);
      const BleuReport rb = Bleu(hyp_b, refs);
      report["b"] = rb;
      rows.push_back("B");
      values.push_back({rb.score});
      sig = PairedBootstrap(hyp, hyp_b, refs, a.resamples, a.seed, threads_);
      report["significance"] = *sig;
    }
    out_ << FormatTable(rows, {"BLEU"}, values);
    if (sig) {
      out_ << "better " << sig->better << " p " << std::fixed << std::setprecision(4) << sig->p_value << " resamples "
           << sig->resamples << "\n"
           << std::defaultfloat;
    }
    if (!a.json.empty()) WriteFileBytes(a.json, report.dump(2) + "\n");
  }

  // -- bpe -----------------------------------------------------------------

  void AddBpe() {
    auto* s = Sub("bpe", "Learn or apply byte-pair encoding");
    s->require_subcommand(1);
    auto& a = bpe_;
    auto* learn = s->add_subcommand("learn", "Learn merges from raw text");
    learn->set_help_flag("-h,--help", "Print this help message and exit");
    learn->add_option("-i,--input", a.inputs, "Raw text files")->required()->check(CLI::ExistingFile);
    learn->add_option("-n,--merges", a.merges, "Number of merges");
    learn->add_option("--min-frequency", a.min_frequency, "Stop when the best pair is rarer than this");
    learn->add_option("-o,--output", a.output, "BPE model file")->required();
    learn->add_option("--vocab", a.vocab, "Also write the vocabulary of the segmented input");
    learn->callback([this] { command_ = [this] { BpeLearn(); }; });
    auto* apply = s->add_subcommand("apply", "Tokenize and segment raw text, or undo segmentation");
    apply->set_help_flag("-h,--help", "Print this help message and exit");
    apply->add_option("-m,--model", a.model, "BPE model file")->required()->check(CLI::ExistingFile);
    apply->add_option("-i,--input", a.input, "Input text")->required()->check(CLI::ExistingFile);
    apply->add_option("-o,--output", a.output, "Output text")->required();
    apply->add_flag("--undo", a.undo, "Join subwords back into words");
    apply->callback([this] { command_ = [this] { BpeApply(); }; });
  }

  void BpeLearn() {
    std::vector<Tokens> corpus;
    for (const auto& f : bpe_.inputs)
      for (const auto& l : ReadLines(f)) corpus.push_back(Tokenize(l));
    const BpeModel m = BpeModel::Learn(corpus, bpe_.merges, bpe_.min_frequency);
    m.Save(bpe_.output);
    if (!bpe_.vocab.empty()) {
      for (auto& s : corpus) s = m.Apply(s);
      Vocab::Build(corpus).Save(bpe_.vocab);
    }
    out_ << "merges " << m.num_merges() << "\n";
  }

  void BpeApply() {
    const BpeModel m = BpeModel::Load(bpe_.model);
    std::vector<std::string> out;
    for (const auto& l : ReadLines(bpe_.input)) out.push_back(Join(bpe_.undo ? m.Undo(SplitSpaces(l)) : m.Apply(Tokenize(l))));
    WriteLines(bpe_.output, out);
  }

  std::ostream& out_;
  std::ostream& err_;
  CLI::App app_;
  std::size_t threads_ = 1;
  bool k_given_ = false;
  std::function<void()> command_;
  TrainArgs train_;
  TranslateArgs translate_;
  ScoreArgs score_;
  PipelineArgs pipeline_;
  EvalArgs eval_;
  BpeArgs bpe_;
};

inline int Main(int argc, const char* const* argv) {
  Cli cli(std::cout, std::cerr);
  return cli.Run(argc, argv);
}

}  // namespace confbt::cli
