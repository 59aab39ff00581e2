// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "confbt/cli/cli.hpp"
#include "confbt/pipeline/toy_language.hpp"

namespace confbt::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result Call(std::vector<std::string> args) {
  static std::ostringstream out, err;
  out.str("");
  err.str("");
  args.insert(args.begin(), "confbt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  Cli cli(out, err);
  const int code = cli.Run(static_cast<int>(argv.size()), argv.data());
  return {code, out.str(), err.str()};
}

fs::path Scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("confbt_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void CheckDescribed(const CLI::App& app, const std::string& path) {
  for (const CLI::Option* o : app.get_options()) {
    EXPECT_FALSE(o->get_description().empty()) << path << " " << o->get_name();
  }
  EXPECT_FALSE(app.get_description().empty()) << path;
  for (const CLI::App* sub : app.get_subcommands({})) CheckDescribed(*sub, path + " " + sub->get_name());
}

TEST(Cli, EveryOptionHasHelp) {
  std::ostringstream out, err;
  Cli cli(out, err);
  CheckDescribed(cli.app(), "confbt");
  std::vector<std::string> names;
  for (const CLI::App* sub : cli.app().get_subcommands({})) names.push_back(sub->get_name());
  EXPECT_EQ(names, (std::vector<std::string>{"train", "translate", "score", "pipeline", "eval", "bpe"}));
}

TEST(Cli, VersionAndHelp) {
  auto r = Call({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, std::string("confbt ") + kVersion + "\n");
  r = Call({"score", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--measure"), std::string::npos);
}

TEST(Cli, EvalIdenticalFilesIsHundred) {
  const fs::path d = Scratch("eval");
  WriteLines(d / "a.txt", {"the cat sat on the mat", "a dog ran home quickly today"});
  const auto r = Call({"eval", "--hyp", (d / "a.txt").string(), "--ref", (d / "a.txt").string(), "--json",
                       (d / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("100.00"), std::string::npos) << r.out;
  const auto j = nlohmann::json::parse(ReadFileBytes(d / "r.json"));
  EXPECT_DOUBLE_EQ(j["a"]["bleu"].get<double>(), 100.0);
}

TEST(Cli, ErrorsAreOneJsonLine) {
  auto r = Call({"eval", "--hyp", "/nonexistent/x"});
  EXPECT_EQ(r.code, 2);
  ASSERT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  auto j = nlohmann::json::parse(r.err.substr(7));
  EXPECT_EQ(j["kind"], "usage");

  const fs::path d = Scratch("err");
  WriteLines(d / "a.txt", {"x y", "z"});
  WriteLines(d / "b.txt", {"x y"});
  r = Call({"eval", "--hyp", (d / "a.txt").string(), "--ref", (d / "b.txt").string()});
  EXPECT_EQ(r.code, 1);
  j = nlohmann::json::parse(r.err.substr(7));
  EXPECT_EQ(j["kind"], "value");
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  r = Call({"train", "--src", (d / "a.txt").string(), "--tgt", (d / "a.txt").string(), "-o",
            (d / "m.ckpt").string(), "--word-confidence"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err.substr(7))["kind"], "config");
}

TEST(Cli, TrainTranslateScore) {
  const fs::path d = Scratch("tts");
  ToyLanguageConfig lc;
  lc.vocab_size = 10;
  lc.max_len = 4;
  WriteToyCorpus(ToyLanguage(lc), {20, 8, 4, 0}, 1, d);
  WriteFileBytes(d / "cfg.json",
                 R"({"model":{"version":1,"d_model":8,"ff_size":16,"layers":1,"heads":2,"max_len":16},)"
                 R"("training":{"max_steps":3,"batch_tokens":100,"warmup_steps":2}})");
  auto p = [&](const char* f) { return (d / f).string(); };
  auto r = Call({"train", "--config", p("cfg.json"), "--src", p("train.tgt"), "--tgt", p("train.src"), "-o",
                 p("rev.ckpt"), "--steps", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("steps 2 ", 0), 0u) << r.out;
  const std::vector<std::string> vocabs{"--input-vocab", p("rev.ckpt.src.vocab"), "--prediction-vocab",
                                        p("rev.ckpt.tgt.vocab")};
  r = Call({"translate", "--checkpoint", p("rev.ckpt"), "--src-vocab", p("rev.ckpt.src.vocab"), "--tgt-vocab",
            p("rev.ckpt.tgt.vocab"), "-i", p("mono.tgt"), "-o", p("bt.src"), "--beam", "2", "--max-len", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ReadLines(p("bt.src")).size(), 8u);

  // Swapped vocabularies do not match the checkpoint.
  r = Call({"translate", "--checkpoint", p("rev.ckpt"), "--src-vocab", p("rev.ckpt.tgt.vocab"), "--tgt-vocab",
            p("rev.ckpt.src.vocab"), "-i", p("mono.tgt"), "-o", p("x")});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(nlohmann::json::parse(r.err.substr(7))["kind"], "vocab");

  std::vector<std::string> score{"score", "--checkpoint", p("rev.ckpt"), "-i", p("mono.tgt"), "--prediction",
                                 p("bt.src")};
  score.insert(score.end(), vocabs.begin(), vocabs.end());
  auto ptp = score;
  ptp.insert(ptp.end(), {"-o", p("ptp.jsonl"), "--measure", "ptp", "--k", "5"});
  r = Call(ptp);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning: --k is ignored"), std::string::npos);
  auto ptp_default = score;
  ptp_default.insert(ptp_default.end(), {"-o", p("ptp2.jsonl"), "--measure", "ptp"});
  r = Call(ptp_default);
  EXPECT_EQ(r.err, "");
  EXPECT_EQ(ReadFileBytes(p("ptp.jsonl")), ReadFileBytes(p("ptp2.jsonl")));

  auto cev = score;
  cev.insert(cev.end(), {"-o", p("cev.jsonl"), "--k", "2"});
  ASSERT_EQ(Call(cev).code, 0);
  EXPECT_EQ(LoadConfidenceRecords(p("cev.jsonl")).size(), 8u);

  r = Call({"train", "--config", p("cfg.json"), "--src", p("train.src"), "--tgt", p("train.tgt"), "--synthetic-src",
            p("bt.src"), "--synthetic-tgt", p("mono.tgt"), "--confidence", p("cev.jsonl"), "--sentence-confidence",
            "--word-confidence", "--ratio", "1:1", "-o", p("fwd.ckpt")});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, PipelineOverridePrecedence) {
  const fs::path d = Scratch("prec");
  WriteFileBytes(d / "p.json", R"({"authentic_source":"a.src","authentic_target":"a.tgt","monolingual":"m.tgt",)"
                               R"("seed":5,"confidence":{"measure":"cev","k":7},"output_dir":"out"})");
  auto resolve = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"confbt", "pipeline", "--config", (d / "p.json").string()});
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    Cli c(o, e);
    c.app().parse(static_cast<int>(argv.size()), argv.data());
    return c.ResolvePipelineSpec();
  };
  PipelineSpec s = resolve({});
  EXPECT_EQ(s.seed, 5u);
  EXPECT_EQ(s.confidence.mc.k, 7u);
  EXPECT_EQ(s.authentic_source, d / "a.src");
  EXPECT_EQ(s.output_dir, d / "out");

  s = resolve({"--seed", "9", "--k", "3", "--output-dir", (d / "flag").string(), "--measure", "exp"});
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.confidence.mc.k, 3u);
  EXPECT_EQ(s.confidence.measure.kind, Measure::kExp);
  EXPECT_EQ(s.output_dir, d / "flag");

  s = resolve({"--measure", "none"});
  EXPECT_FALSE(s.confidence.enabled);

  // Without a config or flag value the environment decides.
  WriteFileBytes(d / "p.json", R"({"authentic_source":"a.src","authentic_target":"a.tgt","monolingual":"m.tgt"})");
  ::setenv(kOutputDirEnv, (d / "env").c_str(), 1);
  EXPECT_EQ(resolve({}).output_dir, d / "env");
  ::unsetenv(kOutputDirEnv);
  EXPECT_THROW(resolve({}), Error);
}

}  // namespace
}  // namespace confbt::cli
