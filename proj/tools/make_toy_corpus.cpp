// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

// Writes a small synthetic parallel corpus with a known translation rule.

#include <iostream>

#include <CLI11.hpp>

#include "confbt/pipeline/toy_language.hpp"

int main(int argc, char** argv) {
  confbt::ToyLanguageConfig lang;
  confbt::ToyCorpusSizes sizes;
  std::uint64_t seed = 0;
  std::string dir;
  CLI::App app("make_toy_corpus: synthetic parallel data for smoke tests");
  app.add_option("-o,--output-dir", dir, "Directory for train/mono/test files")->required();
  app.add_option("--vocab", lang.vocab_size, "Source words");
  app.add_option("--min-len", lang.min_len, "Shortest sentence");
  app.add_option("--max-len", lang.max_len, "Longest sentence");
  app.add_option("--zipf", lang.zipf_exponent, "Word frequency exponent");
  app.add_option("--fertility-every", lang.fertility_every, "Every n-th word translates to two words (0: never)");
  app.add_option("--language-seed", lang.seed, "Lexicon seed");
  app.add_option("--authentic", sizes.authentic, "Parallel training pairs");
  app.add_option("--monolingual", sizes.monolingual, "Target monolingual sentences");
  app.add_option("--source-monolingual", sizes.source_monolingual, "Source monolingual sentences");
  app.add_option("--test", sizes.test, "Test pairs");
  app.add_option("--seed", seed, "Sampling seed");
  CLI11_PARSE(app, argc, argv);
  try {
    confbt::WriteToyCorpus(confbt::ToyLanguage(lang), sizes, seed, dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
