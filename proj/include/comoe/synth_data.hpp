// include/comoe/synth_data.hpp

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

#pragma once

// Seeded synthetic bilingual + code-switching corpus.
//
// Two disjoint token vocabularies: CN-like ids [0, vocab_size_cn) and EN-like
// ids [vocab_size_cn, vocab_size_cn + vocab_size_en). Every token owns a frozen
// prototype vector; each occurrence emits a few prototype + Gaussian-noise
// frames. CS utterances are 2-4 contiguous monolingual segments of
// alternating language.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "comoe/language.hpp"
#include "json.hpp"

namespace comoe {

struct Utterance {
  std::string id;
  Lid lid = Lid::CN;
  std::vector<int> tokens;
  // Frames emitted for each token, in order; sums to num_frames.
  std::vector<int> durations;
  std::size_t num_frames = 0;
  std::size_t d_feat = 0;
  std::vector<float> frames;  // row-major [num_frames, d_feat]

  bool operator==(const Utterance&) const = default;
};

struct ClassCounts {
  int cn = 0;
  int en = 0;
  int cs = 0;

  int total() const { return cn + en + cs; }
  bool operator==(const ClassCounts&) const = default;
};

struct CorpusSpec {
  int vocab_size_cn = 20;
  int vocab_size_en = 20;
  int d_feat = 16;
  int tokens_min = 4;
  int tokens_max = 10;
  int frames_per_token_min = 2;
  int frames_per_token_max = 4;
  double noise_std = 0.3;
  ClassCounts train{500, 500, 500};
  ClassCounts dev{100, 100, 100};
  ClassCounts test{100, 100, 100};
  std::uint64_t seed = 2024;

  int vocab_size() const { return vocab_size_cn + vocab_size_en; }
  // Throws ValidationError naming the offending field.
  void validate() const;
  bool operator==(const CorpusSpec&) const = default;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;

  // "train", "dev" or "test".
  const std::vector<Utterance>& split(std::string_view name) const;
  bool operator==(const Corpus&) const = default;
};

Corpus gen_corpus(const CorpusSpec& spec);

// CN if every token is CN, EN if every token is EN, CS otherwise.
Lid infer_lid(std::span<const int> tokens, int vocab_size_cn);

// Checks the utterance invariants (label/token consistency, frame count,
// finite frames). Throws ValidationError.
void validate_utterance(const Utterance& utt, const CorpusSpec& spec);

nlohmann::json to_json(const CorpusSpec& spec);
CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

inline constexpr int kCorpusFormatVersion = 1;

// One split per file: a header line {format, version, split, count, spec}
// followed by one JSON record per utterance.
void write_split(const std::vector<Utterance>& utts, const CorpusSpec& spec, const std::string& split,
                 const std::filesystem::path& path);
std::vector<Utterance> read_split(const std::filesystem::path& path, CorpusSpec* spec_out = nullptr);

// Directory layout: train.jsonl, dev.jsonl, test.jsonl, manifest.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus read_corpus(const std::filesystem::path& dir);

}  // namespace comoe
