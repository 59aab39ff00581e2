// Copyright 2026 The confbt Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>

#include "confbt/eval/bleu.hpp"

namespace confbt {
namespace {

std::vector<std::string> RandomCorpus(RngStream& rng, std::size_t lines) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < lines; ++i) {
    std::string s;
    for (std::size_t j = 0, n = 5 + rng.Below(8); j < n; ++j) {
      if (j) s += ' ';
      s += "w" + std::to_string(rng.Below(6));
    }
    out.push_back(s);
  }
  return out;
}

// Perturbs each line by replacing some tokens.
std::vector<std::string> Corrupt(const std::vector<std::string>& ref, RngStream& rng, double rate) {
  std::vector<std::string> out;
  for (const auto& line : ref) {
    Tokens t = SplitSpaces(line);
    for (auto& w : t)
      if (rng.Uniform() < rate) w = "x" + std::to_string(rng.Below(3));
    out.push_back(Join(t));
  }
  return out;
}

TEST(Bleu, IdentityIsHundred) {
  RngStream rng(1, 1);
  const auto ref = RandomCorpus(rng, 30);
  EXPECT_DOUBLE_EQ(Bleu(ref, ref).score, 100.0);
}

TEST(Bleu, ClippedUnigramPrecision) {
  const auto r = Bleu({"the the the the the the the"}, {"the cat is on the mat"});
  EXPECT_DOUBLE_EQ(r.precisions[0], 2.0 / 7.0);
  EXPECT_EQ(r.score, 0.0);  // no matching 2-grams
  EXPECT_EQ(r.cand_len, 7u);
  EXPECT_EQ(r.ref_len, 6u);
}

TEST(Bleu, EmptyCandidatesGiveZero) {
  EXPECT_EQ(Bleu({}, {}).score, 0.0);
  EXPECT_EQ(Bleu({"", ""}, {"a b c d", "e f g h"}).score, 0.0);
}

TEST(Bleu, HandComputedCorpusScore) {
  // cand: a b c d e (5), ref: a b c d f g (6)
  // p1 4/5, p2 3/4, p3 2/3, p4 1/2, BP exp(1 - 6/5)
  const auto r = Bleu({"a b c d e"}, {"a b c d f g"});
  const double want = 100.0 * std::exp(1.0 - 6.0 / 5.0) *
                      std::exp((std::log(0.8) + std::log(0.75) + std::log(2.0 / 3.0) + std::log(0.5)) / 4.0);
  EXPECT_NEAR(r.score, want, 1e-12);
}

TEST(Bleu, PermutationInvariant) {
  RngStream rng(2, 2);
  auto ref = RandomCorpus(rng, 40);
  auto cand = Corrupt(ref, rng, 0.2);
  const double base = Bleu(cand, ref).score;
  for (int s = 0; s < 20; ++s) {
    std::vector<std::size_t> perm(ref.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    RngStream prng(3, static_cast<std::uint64_t>(s));
    Shuffle(perm, prng);
    std::vector<std::string> c2, r2;
    for (auto i : perm) {
      c2.push_back(cand[i]);
      r2.push_back(ref[i]);
    }
    EXPECT_DOUBLE_EQ(Bleu(c2, r2).score, base);
  }
}

TEST(Bleu, LineCountMismatch) { EXPECT_THROW(Bleu({"a"}, {"a", "b"}), Error); }

TEST(Bootstrap, IdenticalSystemsSplitTies) {
  RngStream rng(4, 4);
  const auto ref = RandomCorpus(rng, 30);
  const auto cand = Corrupt(ref, rng, 0.3);
  const auto r = PairedBootstrap(cand, cand, ref, 1000, 7);
  EXPECT_EQ(r.ties, 1000u);
  EXPECT_NEAR(r.p_value, 0.5, 0.05);
}

TEST(Bootstrap, DominatingSystemHasZeroP) {
  RngStream rng(5, 5);
  const auto ref = RandomCorpus(rng, 30);
  // Reverse token order: keeps unigrams, destroys most higher-order matches.
  std::vector<std::string> shuffled;
  for (const auto& line : ref) {
    Tokens t = SplitSpaces(line);
    std::reverse(t.begin(), t.end());
    shuffled.push_back("zz " + Join(t));
  }
  for (std::size_t n : {1, 10, 300}) {
    const auto r = PairedBootstrap(shuffled, ref, ref, n, 3);
    EXPECT_EQ(r.better, "B");
    EXPECT_EQ(r.p_value, 0.0);
  }
}

TEST(Bootstrap, ReproducibleAndThreadIndependent) {
  RngStream rng(6, 6);
  const auto ref = RandomCorpus(rng, 25);
  const auto a = Corrupt(ref, rng, 0.2), b = Corrupt(ref, rng, 0.25);
  const auto r1 = PairedBootstrap(a, b, ref, 200, 9);
  const auto r2 = PairedBootstrap(a, b, ref, 200, 9, 4);
  EXPECT_EQ(nlohmann::json(r1), nlohmann::json(r2));
  EXPECT_GE(r1.p_value, 0.0);
  EXPECT_LE(r1.p_value, 1.0);
}

TEST(Bootstrap, PValueShrinksAsGapGrows) {
  RngStream rng(8, 8);
  const auto ref = RandomCorpus(rng, 40);
  const auto base = Corrupt(ref, rng, 0.35);
  double prev = 1.0;
  for (double rate : {0.33, 0.25, 0.15, 0.05}) {
    RngStream crng(10, 10);  // same corruption stream: nested improvements
    const auto better = Corrupt(ref, crng, rate);
    const double p = PairedBootstrap(base, better, ref, 300, 1).p_value;
    EXPECT_LE(p, prev + 0.05) << rate;
    prev = std::min(prev, p);
  }
  EXPECT_LT(prev, 0.05);
}

TEST(Bootstrap, MisalignedFails) {
  EXPECT_THROW(PairedBootstrap({"a"}, {"a", "b"}, {"a"}), Error);
  EXPECT_THROW(PairedBootstrap({"a"}, {"a"}, {"a"}, 0), Error);
}

TEST(Table, Aligned) {
  const std::string t = FormatTable({"None", "Search + CEV"}, {"dev", "test"}, {{1.5, 22.25}, {10, 3}});
  EXPECT_EQ(t,
            "condition       dev   test\n"
            "--------------------------\n"
            "None           1.50  22.25\n"
            "Search + CEV  10.00   3.00\n");
}

}  // namespace
}  // namespace confbt
