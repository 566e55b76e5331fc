// src/synth_data.cpp

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

#include "comoe/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "comoe/config.hpp"
#include "comoe/errors.hpp"

namespace comoe {

namespace {

constexpr std::uint64_t kPrototypeStream = 0x70726f746fULL;

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return std::mt19937_64(seq);
}

std::vector<float> make_prototypes(const CorpusSpec& spec) {
  auto rng = make_stream(spec.seed, kPrototypeStream, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> protos(static_cast<std::size_t>(spec.vocab_size()) * spec.d_feat);
  for (float& v : protos) v = static_cast<float>(normal(rng));
  return protos;
}

std::vector<int> sample_tokens(const CorpusSpec& spec, Lid lid, std::mt19937_64& rng) {
  const int lo = lid == Lid::CS ? std::max(2, spec.tokens_min) : spec.tokens_min;
  const int n = std::uniform_int_distribution<int>(lo, spec.tokens_max)(rng);
  std::uniform_int_distribution<int> cn_tok(0, spec.vocab_size_cn - 1);
  std::uniform_int_distribution<int> en_tok(spec.vocab_size_cn, spec.vocab_size() - 1);
  std::vector<int> tokens(static_cast<std::size_t>(n));
  if (lid != Lid::CS) {
    for (int& t : tokens) t = lid == Lid::CN ? cn_tok(rng) : en_tok(rng);
    return tokens;
  }
  // Contiguous segments: choose distinct switch points in 1..n-1.
  const int segments = std::uniform_int_distribution<int>(2, std::min(4, n))(rng);
  std::vector<int> candidates(static_cast<std::size_t>(n - 1));
  std::iota(candidates.begin(), candidates.end(), 1);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  std::vector<int> cuts(candidates.begin(), candidates.begin() + (segments - 1));
  std::sort(cuts.begin(), cuts.end());
  bool cn_turn = std::bernoulli_distribution(0.5)(rng);
  std::size_t next_cut = 0;
  for (int i = 0; i < n; ++i) {
    if (next_cut < cuts.size() && i == cuts[next_cut]) {
      cn_turn = !cn_turn;
      ++next_cut;
    }
    tokens[static_cast<std::size_t>(i)] = cn_turn ? cn_tok(rng) : en_tok(rng);
  }
  return tokens;
}

Utterance make_utterance(const CorpusSpec& spec, const std::vector<float>& protos, Lid lid, std::uint64_t split_code,
                         std::size_t index, const std::string& id) {
  auto rng = make_stream(spec.seed, split_code, index);
  Utterance u;
  u.id = id;
  u.lid = lid;
  u.d_feat = static_cast<std::size_t>(spec.d_feat);
  u.tokens = sample_tokens(spec, lid, rng);
  std::uniform_int_distribution<int> dur(spec.frames_per_token_min, spec.frames_per_token_max);
  // Unused when noise_std is 0; the distribution needs a positive stddev.
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);
  for (int tok : u.tokens) {
    const int k = dur(rng);
    u.durations.push_back(k);
    const float* proto = protos.data() + static_cast<std::size_t>(tok) * u.d_feat;
    for (int f = 0; f < k; ++f) {
      for (std::size_t j = 0; j < u.d_feat; ++j) {
        const double n = spec.noise_std > 0.0 ? noise(rng) : 0.0;
        u.frames.push_back(static_cast<float>(proto[j] + n));
      }
    }
    u.num_frames += static_cast<std::size_t>(k);
  }
  return u;
}

std::vector<Utterance> make_split(const CorpusSpec& spec, const std::vector<float>& protos, const ClassCounts& counts,
                                  const std::string& name, std::uint64_t split_code) {
  // Classes interleaved round-robin so any prefix is mixed.
  std::vector<Lid> order;
  int left[3] = {counts.cn, counts.en, counts.cs};
  while (left[0] + left[1] + left[2] > 0) {
    for (int c = 0; c < 3; ++c) {
      if (left[c] > 0) {
        order.push_back(static_cast<Lid>(c));
        --left[c];
      }
    }
  }
  std::vector<Utterance> out;
  out.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", name.c_str(), i);
    out.push_back(make_utterance(spec, protos, order[i], split_code, i, id));
  }
  return out;
}

nlohmann::json counts_json(const ClassCounts& c) { return {c.cn, c.en, c.cs}; }

ClassCounts counts_from_json(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()};
}

ClassCounts parse_counts(const std::string& key, const std::string& value) {
  const GroupSpec g = parse_group_spec(key, value);
  return {g.cn, g.en, g.cs};
}

nlohmann::json utterance_json(const Utterance& u) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t t = 0; t < u.num_frames; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < u.d_feat; ++j) row.push_back(u.frames[t * u.d_feat + j]);
    frames.push_back(std::move(row));
  }
  return {{"id", u.id}, {"lid", lid_name(u.lid)}, {"tokens", u.tokens}, {"durations", u.durations},
          {"frames", std::move(frames)}};
}

Utterance utterance_from_json(const nlohmann::json& j, const CorpusSpec& spec) {
  Utterance u;
  u.id = j.at("id").get<std::string>();
  u.lid = parse_lid(j.at("lid").get<std::string>());
  u.tokens = j.at("tokens").get<std::vector<int>>();
  u.durations = j.at("durations").get<std::vector<int>>();
  const auto& frames = j.at("frames");
  u.num_frames = frames.size();
  u.d_feat = static_cast<std::size_t>(spec.d_feat);
  u.frames.reserve(u.num_frames * u.d_feat);
  for (const auto& row : frames) {
    if (row.size() != u.d_feat) throw ValidationError("frame row width does not match d_feat");
    for (const auto& v : row) u.frames.push_back(static_cast<float>(v.get<double>()));
  }
  validate_utterance(u, spec);
  return u;
}

}  // namespace

void CorpusSpec::validate() const {
  auto require = [](bool ok, const char* field, const std::string& why) {
    if (!ok) throw ValidationError(std::string(field) + ": " + why);
  };
  require(vocab_size_cn >= 1, "vocab_size_cn", "must be positive");
  require(vocab_size_en >= 1, "vocab_size_en", "must be positive");
  require(d_feat >= 1, "d_feat", "must be positive");
  require(tokens_min >= 1, "tokens_min", "must be at least 1");
  require(tokens_max >= tokens_min, "tokens_max", "must be >= tokens_min");
  require(frames_per_token_min >= 2, "frames_per_token_min", "must be at least 2");
  require(frames_per_token_max >= frames_per_token_min, "frames_per_token_max", "must be >= frames_per_token_min");
  require(std::isfinite(noise_std) && noise_std >= 0.0, "noise_std", "must be finite and nonnegative");
  for (const auto* c : {&train, &dev, &test}) {
    require(c->cn >= 0 && c->en >= 0 && c->cs >= 0, "counts", "class counts must be nonnegative");
  }
  require(train.total() + dev.total() + test.total() > 0, "counts", "corpus would be empty");
  if (train.cs + dev.cs + test.cs > 0) {
    require(tokens_max >= 2, "tokens_max", "code-switching utterances need at least 2 tokens");
  }
}

const std::vector<Utterance>& Corpus::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ValidationError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

Lid infer_lid(std::span<const int> tokens, int vocab_size_cn) {
  bool has_cn = false, has_en = false;
  for (int t : tokens) (t < vocab_size_cn ? has_cn : has_en) = true;
  if (has_cn && has_en) return Lid::CS;
  return has_en ? Lid::EN : Lid::CN;
}

void validate_utterance(const Utterance& u, const CorpusSpec& spec) {
  if (u.tokens.empty()) throw ValidationError(u.id + ": empty transcript");
  for (int t : u.tokens) {
    if (t < 0 || t >= spec.vocab_size()) throw ValidationError(u.id + ": token id out of range");
  }
  if (infer_lid(u.tokens, spec.vocab_size_cn) != u.lid)
    throw ValidationError(u.id + ": LID label inconsistent with the transcript");
  if (u.durations.size() != u.tokens.size()) throw ValidationError(u.id + ": one duration per token required");
  const long total = std::accumulate(u.durations.begin(), u.durations.end(), 0L);
  if (total < 0 || static_cast<std::size_t>(total) != u.num_frames)
    throw ValidationError(u.id + ": durations do not sum to the frame count");
  if (u.num_frames < u.tokens.size()) throw ValidationError(u.id + ": fewer frames than tokens");
  if (u.frames.size() != u.num_frames * u.d_feat) throw ValidationError(u.id + ": frame matrix size mismatch");
  for (float v : u.frames) {
    if (!std::isfinite(v)) throw ValidationError(u.id + ": non-finite frame value");
  }
}

Corpus gen_corpus(const CorpusSpec& spec) {
  spec.validate();
  const auto protos = make_prototypes(spec);
  Corpus c;
  c.spec = spec;
  c.train = make_split(spec, protos, spec.train, "train", 1);
  c.dev = make_split(spec, protos, spec.dev, "dev", 2);
  c.test = make_split(spec, protos, spec.test, "test", 3);
  return c;
}

nlohmann::json to_json(const CorpusSpec& s) {
  return {{"vocab_size_cn", s.vocab_size_cn},
          {"vocab_size_en", s.vocab_size_en},
          {"d_feat", s.d_feat},
          {"tokens_per_utterance", {s.tokens_min, s.tokens_max}},
          {"frames_per_token", {s.frames_per_token_min, s.frames_per_token_max}},
          {"noise_std", s.noise_std},
          {"counts", {{"train", counts_json(s.train)}, {"dev", counts_json(s.dev)}, {"test", counts_json(s.test)}}},
          {"seed", s.seed}};
}

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  try {
    CorpusSpec s;
    s.vocab_size_cn = j.at("vocab_size_cn").get<int>();
    s.vocab_size_en = j.at("vocab_size_en").get<int>();
    s.d_feat = j.at("d_feat").get<int>();
    s.tokens_min = j.at("tokens_per_utterance").at(0).get<int>();
    s.tokens_max = j.at("tokens_per_utterance").at(1).get<int>();
    s.frames_per_token_min = j.at("frames_per_token").at(0).get<int>();
    s.frames_per_token_max = j.at("frames_per_token").at(1).get<int>();
    s.noise_std = j.at("noise_std").get<double>();
    s.train = counts_from_json(j.at("counts").at("train"));
    s.dev = counts_from_json(j.at("counts").at("dev"));
    s.test = counts_from_json(j.at("counts").at("test"));
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corpus spec: ") + e.what());
  }
}

CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  CorpusSpec s;
  if (auto v = kv.take("vocab_size_cn")) s.vocab_size_cn = parse_int_field("vocab_size_cn", *v);
  if (auto v = kv.take("vocab_size_en")) s.vocab_size_en = parse_int_field("vocab_size_en", *v);
  if (auto v = kv.take("d_feat")) s.d_feat = parse_int_field("d_feat", *v);
  if (auto v = kv.take("tokens_min")) s.tokens_min = parse_int_field("tokens_min", *v);
  if (auto v = kv.take("tokens_max")) s.tokens_max = parse_int_field("tokens_max", *v);
  if (auto v = kv.take("frames_per_token_min"))
    s.frames_per_token_min = parse_int_field("frames_per_token_min", *v);
  if (auto v = kv.take("frames_per_token_max"))
    s.frames_per_token_max = parse_int_field("frames_per_token_max", *v);
  if (auto v = kv.take("noise_std")) s.noise_std = parse_double_field("noise_std", *v);
  if (auto v = kv.take("train_counts")) s.train = parse_counts("train_counts", *v);
  if (auto v = kv.take("dev_counts")) s.dev = parse_counts("dev_counts", *v);
  if (auto v = kv.take("test_counts")) s.test = parse_counts("test_counts", *v);
  if (auto v = kv.take("seed")) s.seed = parse_u64_field("seed", *v);
  kv.expect_consumed();
  s.validate();
  return s;
}

void write_split(const std::vector<Utterance>& utts, const CorpusSpec& spec, const std::string& split,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  const nlohmann::json header = {{"format", "comoe-corpus"},
                                 {"version", kCorpusFormatVersion},
                                 {"split", split},
                                 {"count", utts.size()},
                                 {"spec", to_json(spec)}};
  out << header.dump() << '\n';
  for (const auto& u : utts) out << utterance_json(u).dump() << '\n';
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::vector<Utterance> read_split(const std::filesystem::path& path, CorpusSpec* spec_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  const std::string file = path.string();
  std::string line;
  std::size_t lineno = 0;

  auto parse_line = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(file, lineno, std::string("malformed record: ") + e.what());
    }
  };

  if (!std::getline(in, line)) throw ParseError(file, 1, "missing header line");
  ++lineno;
  const nlohmann::json header = parse_line(line);
  CorpusSpec spec;
  std::size_t count = 0;
  try {
    if (header.at("format").get<std::string>() != "comoe-corpus") throw ParseError(file, lineno, "not a corpus file");
    const int version = header.at("version").get<int>();
    if (version != kCorpusFormatVersion) {
      throw ParseError(file, lineno, "version mismatch: file has " + std::to_string(version) + ", reader expects " +
                                         std::to_string(kCorpusFormatVersion));
    }
    count = header.at("count").get<std::size_t>();
    spec = corpus_spec_from_json(header.at("spec"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file, lineno, std::string("bad header: ") + e.what());
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError(file, lineno, e.what());
  }

  std::vector<Utterance> utts;
  utts.reserve(count);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const nlohmann::json rec = parse_line(line);
    try {
      utts.push_back(utterance_from_json(rec, spec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file, lineno, std::string("bad record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(file, lineno, e.what());
    }
  }
  if (utts.size() != count) {
    throw ParseError(file, lineno + 1, "truncated: header declares " + std::to_string(count) + " records, found " +
                                           std::to_string(utts.size()));
  }
  if (spec_out) *spec_out = spec;
  return utts;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_split(corpus.train, corpus.spec, "train", dir / "train.jsonl");
  write_split(corpus.dev, corpus.spec, "dev", dir / "dev.jsonl");
  write_split(corpus.test, corpus.spec, "test", dir / "test.jsonl");
  const nlohmann::json manifest = {
      {"format", "comoe-corpus"},
      {"version", kCorpusFormatVersion},
      {"spec", to_json(corpus.spec)},
      {"splits",
       {{"train", {{"file", "train.jsonl"}, {"count", corpus.train.size()}}},
        {"dev", {{"file", "dev.jsonl"}, {"count", corpus.dev.size()}}},
        {"test", {{"file", "test.jsonl"}, {"count", corpus.test.size()}}}}}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw ValidationError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Corpus read_corpus(const std::filesystem::path& dir) {
  Corpus c;
  CorpusSpec train_spec, dev_spec, test_spec;
  c.train = read_split(dir / "train.jsonl", &train_spec);
  c.dev = read_split(dir / "dev.jsonl", &dev_spec);
  c.test = read_split(dir / "test.jsonl", &test_spec);
  if (!(train_spec == dev_spec) || !(train_spec == test_spec))
    throw ValidationError("corpus splits in " + dir.string() + " were generated from different specs");
  c.spec = train_spec;
  return c;
}

}  // namespace comoe
