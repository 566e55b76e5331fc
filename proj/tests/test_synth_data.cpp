// tests/test_synth_data.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "comoe/errors.hpp"
#include "comoe/synth_data.hpp"
#include "test_util.hpp"

using namespace comoe;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 7) {
  CorpusSpec s;
  s.train = {30, 30, 30};
  s.dev = {10, 10, 10};
  s.test = {10, 10, 10};
  s.seed = seed;
  return s;
}

int language_runs(const std::vector<int>& tokens, int vocab_cn) {
  int runs = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (i == 0 || (tokens[i] < vocab_cn) != (tokens[i - 1] < vocab_cn)) ++runs;
  return runs;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(GenCorpus, SameSeedIsIdentical) {
  EXPECT_EQ(gen_corpus(small_spec()), gen_corpus(small_spec()));
}

TEST(GenCorpus, DifferentSeedsDiffer) {
  const Corpus a = gen_corpus(small_spec(1));
  const Corpus b = gen_corpus(small_spec(2));
  EXPECT_NE(a.train.front().frames, b.train.front().frames);
}

TEST(GenCorpus, SplitSizesFollowCounts) {
  const Corpus c = gen_corpus(small_spec());
  EXPECT_EQ(c.train.size(), 90u);
  EXPECT_EQ(c.dev.size(), 30u);
  EXPECT_EQ(c.test.size(), 30u);
  std::set<std::string> ids;
  for (const auto* split : {&c.train, &c.dev, &c.test})
    for (const auto& u : *split) EXPECT_TRUE(ids.insert(u.id).second) << "duplicate id " << u.id;
}

TEST(GenCorpus, OnlyCnCountsGivesCnUtterances) {
  CorpusSpec s = small_spec();
  s.train = {20, 0, 0};
  s.dev = {5, 0, 0};
  s.test = {5, 0, 0};
  const Corpus c = gen_corpus(s);
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (const auto& u : *split) {
      EXPECT_EQ(u.lid, Lid::CN);
      for (int t : u.tokens) EXPECT_LT(t, s.vocab_size_cn);
    }
  }
}

TEST(GenCorpus, UtteranceInvariantsHold) {
  const CorpusSpec s = small_spec();
  const Corpus c = gen_corpus(s);
  for (const auto* split : {&c.train, &c.dev, &c.test}) {
    for (const auto& u : *split) {
      EXPECT_NO_THROW(validate_utterance(u, s));
      EXPECT_EQ(u.lid, infer_lid(u.tokens, s.vocab_size_cn));
      ASSERT_EQ(u.durations.size(), u.tokens.size());
      EXPECT_EQ(u.num_frames, static_cast<std::size_t>(std::accumulate(u.durations.begin(), u.durations.end(), 0)));
      EXPECT_EQ(u.frames.size(), u.num_frames * static_cast<std::size_t>(s.d_feat));
      EXPECT_GE(u.num_frames, 2 * u.tokens.size());
      EXPECT_GE(static_cast<int>(u.tokens.size()), s.tokens_min);
      EXPECT_LE(static_cast<int>(u.tokens.size()), s.tokens_max);
      for (int d : u.durations) {
        EXPECT_GE(d, s.frames_per_token_min);
        EXPECT_LE(d, s.frames_per_token_max);
      }
      for (int t : u.tokens) {
        EXPECT_GE(t, 0);
        EXPECT_LT(t, s.vocab_size());
      }
      const int runs = language_runs(u.tokens, s.vocab_size_cn);
      if (u.lid == Lid::CS) {
        EXPECT_GE(runs, 2);
        EXPECT_LE(runs, 4);
      } else {
        EXPECT_EQ(runs, 1);
      }
    }
  }
}

TEST(GenCorpus, FramesSitNearTheirTokenPrototype) {
  // Two occurrences of one token differ only by noise, so their frame distance
  // stays well below the distance between distinct prototypes.
  CorpusSpec s = small_spec();
  s.noise_std = 0.0;
  const Corpus c = gen_corpus(s);
  std::vector<std::vector<float>> proto(static_cast<std::size_t>(s.vocab_size()));
  for (const auto& u : c.train) {
    std::size_t f = 0;
    for (std::size_t k = 0; k < u.tokens.size(); ++k) {
      for (int r = 0; r < u.durations[k]; ++r, ++f) {
        std::vector<float> row(u.frames.begin() + static_cast<long>(f * s.d_feat),
                               u.frames.begin() + static_cast<long>((f + 1) * s.d_feat));
        auto& p = proto[static_cast<std::size_t>(u.tokens[k])];
        if (p.empty()) p = row;
        EXPECT_EQ(p, row);
      }
    }
  }
}

TEST(CorpusSpec, InvalidFieldsAreNamed) {
  auto expect_field = [](CorpusSpec s, const std::string& field) {
    try {
      s.validate();
      ADD_FAILURE() << "expected failure for " << field;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  CorpusSpec s;
  s.frames_per_token_min = 1;
  expect_field(s, "frames_per_token_min");
  s = {};
  s.vocab_size_en = 0;
  expect_field(s, "vocab_size_en");
  s = {};
  s.tokens_max = 2;
  s.tokens_min = 3;
  expect_field(s, "tokens_max");
  s = {};
  s.noise_std = -1;
  expect_field(s, "noise_std");
  EXPECT_THROW(gen_corpus(CorpusSpec{.frames_per_token_min = 1}), ValidationError);
}

TEST(CorpusSpec, JsonRoundTrip) {
  const CorpusSpec s = small_spec(99);
  EXPECT_EQ(corpus_spec_from_json(to_json(s)), s);
}

TEST(CorpusFiles, RoundTripIsExact) {
  const auto dir = comoe::testing::scratch_dir("corpus_rt");
  const Corpus c = gen_corpus(small_spec());
  write_corpus(c, dir);
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(read_corpus(dir), c);
}

TEST(CorpusFiles, TruncatedFileNamesLine) {
  const auto dir = comoe::testing::scratch_dir("corpus_trunc");
  const Corpus c = gen_corpus(small_spec());
  write_split(c.dev, c.spec, "dev", dir / "dev.jsonl");
  const std::string text = slurp(dir / "dev.jsonl");
  // Cut in the middle of the fourth record (line 5).
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) pos = text.find('\n', pos) + 1;
  dump(dir / "cut.jsonl", text.substr(0, pos + 40));
  try {
    read_split(dir / "cut.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
  // Whole records dropped: the count check reports the line after the end.
  dump(dir / "short.jsonl", text.substr(0, pos));
  EXPECT_THROW(read_split(dir / "short.jsonl"), ParseError);
}

TEST(CorpusFiles, UnknownLidLabelIsRejected) {
  const auto dir = comoe::testing::scratch_dir("corpus_lid");
  const Corpus c = gen_corpus(small_spec());
  write_split(c.dev, c.spec, "dev", dir / "dev.jsonl");
  std::string text = slurp(dir / "dev.jsonl");
  const auto at = text.find("\"lid\":\"CN\"");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 10, "\"lid\":\"FR\"");
  dump(dir / "bad.jsonl", text);
  try {
    read_split(dir / "bad.jsonl");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("FR"), std::string::npos) << e.what();
  }
}

TEST(CorpusFiles, VersionMismatchIsRejected) {
  const auto dir = comoe::testing::scratch_dir("corpus_ver");
  const Corpus c = gen_corpus(small_spec());
  write_split(c.dev, c.spec, "dev", dir / "dev.jsonl");
  std::string text = slurp(dir / "dev.jsonl");
  const auto at = text.find("\"version\":1");
  ASSERT_NE(at, std::string::npos);
  text.replace(at, 11, "\"version\":9");
  dump(dir / "v9.jsonl", text);
  EXPECT_THROW(read_split(dir / "v9.jsonl"), ParseError);
}

TEST(Lid, ParseAndName) {
  EXPECT_EQ(parse_lid("CS"), Lid::CS);
  EXPECT_EQ(lid_name(Lid::EN), "EN");
  EXPECT_THROW(parse_lid("cn"), ValidationError);
}
