// src/config.cpp

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

#include "comoe/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "comoe/errors.hpp"

namespace comoe {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::bi_encoder: return "bi_encoder";
    case Variant::switch_sparse: return "switch_sparse";
    case Variant::dense_moe: return "dense_moe";
    case Variant::collaborative: return "collaborative";
  }
  return "?";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : {Variant::baseline, Variant::bi_encoder, Variant::switch_sparse, Variant::dense_moe,
                    Variant::collaborative}) {
    if (variant_name(v) == text) return v;
  }
  throw ValidationError("variant: unknown architecture '" + std::string(text) + "'");
}

int ModelConfig::experts_per_layer() const {
  switch (variant) {
    case Variant::baseline:
    case Variant::bi_encoder: return 1;
    case Variant::switch_sparse: return 2;
    case Variant::dense_moe:
    case Variant::collaborative: return groups.total();
  }
  return 1;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* field) {
    if (v <= 0) throw ValidationError(std::string(field) + ": must be positive, got " + std::to_string(v));
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(d_ffn, "d_ffn");
  positive(d_feat, "d_feat");
  positive(vocab_size, "vocab_size");
  positive(decoder_layers, "decoder_layers");
  if (num_shared_layers < 0) throw ValidationError("num_shared_layers: must be nonnegative");
  if (num_moe_layers < 0) throw ValidationError("num_moe_layers: must be nonnegative");
  if (num_shared_layers + num_moe_layers == 0) throw ValidationError("num_moe_layers: encoder has no layers");
  if (d_model % n_heads != 0) throw ValidationError("n_heads: d_model must be divisible by n_heads");
  if (!(temperature > 0.0)) throw ValidationError("temperature: must be positive");
  if (!(lambda_asr >= 0.0 && lambda_asr <= 1.0)) throw ValidationError("lambda_asr: must lie in [0, 1]");
  if (!(lambda_lid >= 0.0 && lambda_lid <= 1.0)) throw ValidationError("lambda_lid: must lie in [0, 1]");
  if (groups.cn < 0 || groups.en < 0 || groups.cs < 0) throw ValidationError("group_spec: counts must be nonnegative");
  switch (variant) {
    case Variant::collaborative:
      if (groups.cn < 1 || groups.en < 1)
        throw ValidationError("group_spec: collaborative variant needs at least one CN and one EN expert");
      if (num_moe_layers < 1) throw ValidationError("num_moe_layers: collaborative variant needs MoE layers");
      break;
    case Variant::dense_moe:
      if (groups.total() < 2) throw ValidationError("group_spec: dense_moe needs at least two experts");
      if (num_moe_layers < 1) throw ValidationError("num_moe_layers: dense_moe needs MoE layers");
      break;
    case Variant::switch_sparse:
      if (num_moe_layers < 1) throw ValidationError("num_moe_layers: switch_sparse needs MoE layers");
      break;
    default: break;
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", variant_name(c.variant)},
          {"num_shared_layers", c.num_shared_layers},
          {"num_moe_layers", c.num_moe_layers},
          {"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"d_ffn", c.d_ffn},
          {"d_feat", c.d_feat},
          {"vocab_size", c.vocab_size},
          {"decoder_layers", c.decoder_layers},
          {"group_spec", {c.groups.cn, c.groups.en, c.groups.cs}},
          {"temperature", c.temperature},
          {"lambda_asr", c.lambda_asr},
          {"lambda_lid", c.lambda_lid},
          {"detach_collab_weights", c.detach_collab_weights},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.num_shared_layers = j.at("num_shared_layers").get<int>();
    c.num_moe_layers = j.at("num_moe_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.d_feat = j.at("d_feat").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.decoder_layers = j.at("decoder_layers").get<int>();
    const auto& g = j.at("group_spec");
    c.groups = {g.at(0).get<int>(), g.at(1).get<int>(), g.at(2).get<int>()};
    c.temperature = j.at("temperature").get<double>();
    c.lambda_asr = j.at("lambda_asr").get<double>();
    c.lambda_lid = j.at("lambda_lid").get<double>();
    c.detach_collab_weights = j.at("detach_collab_weights").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text, const std::string& source) {
  KeyValueFile kv;
  kv.source_ = source;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(source, lineno, "missing key");
    if (kv.values_.count(key)) throw ParseError(source, lineno, "duplicate key '" + key + "'");
    kv.values_[key] = {value, lineno};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::optional<std::string> KeyValueFile::take(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  consumed_[key] = true;
  return it->second.first;
}

void KeyValueFile::expect_consumed() const {
  for (const auto& [key, entry] : values_) {
    if (!consumed_.count(key)) throw ParseError(source_, entry.second, "unknown key '" + key + "'");
  }
}

std::size_t KeyValueFile::line_of(const std::string& key) const {
  auto it = values_.find(key);
  return it == values_.end() ? 0 : it->second.second;
}

int parse_int_field(const std::string& key, const std::string& value) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ValidationError(key + ": expected an integer, got '" + value + "'");
  return out;
}

std::uint64_t parse_u64_field(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ValidationError(key + ": expected an unsigned integer, got '" + value + "'");
  return out;
}

double parse_double_field(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool_field(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ValidationError(key + ": expected true or false, got '" + value + "'");
}

GroupSpec parse_group_spec(const std::string& key, const std::string& value) {
  GroupSpec g;
  std::string v = value;
  for (char& ch : v) {
    if (ch == ',' || ch == '(' || ch == ')') ch = ' ';
  }
  std::istringstream in(v);
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) throw ValidationError(key + ": expected three counts 'cn,en,cs'");
  g.cn = parse_int_field(key, a);
  g.en = parse_int_field(key, b);
  g.cs = parse_int_field(key, c);
  return g;
}

void apply_model_keys(KeyValueFile& kv, ModelConfig& cfg, std::optional<int>* d_feat_set,
                      std::optional<int>* vocab_set) {
  if (auto v = kv.take("variant")) cfg.variant = parse_variant(*v);
  if (auto v = kv.take("num_shared_layers")) cfg.num_shared_layers = parse_int_field("num_shared_layers", *v);
  if (auto v = kv.take("num_moe_layers")) cfg.num_moe_layers = parse_int_field("num_moe_layers", *v);
  if (auto v = kv.take("d_model")) cfg.d_model = parse_int_field("d_model", *v);
  if (auto v = kv.take("n_heads")) cfg.n_heads = parse_int_field("n_heads", *v);
  if (auto v = kv.take("d_ffn")) cfg.d_ffn = parse_int_field("d_ffn", *v);
  if (auto v = kv.take("d_feat")) {
    cfg.d_feat = parse_int_field("d_feat", *v);
    if (d_feat_set) *d_feat_set = cfg.d_feat;
  }
  if (auto v = kv.take("vocab_size")) {
    cfg.vocab_size = parse_int_field("vocab_size", *v);
    if (vocab_set) *vocab_set = cfg.vocab_size;
  }
  if (auto v = kv.take("decoder_layers")) cfg.decoder_layers = parse_int_field("decoder_layers", *v);
  if (auto v = kv.take("group_spec")) cfg.groups = parse_group_spec("group_spec", *v);
  if (auto v = kv.take("temperature")) cfg.temperature = parse_double_field("temperature", *v);
  if (auto v = kv.take("lambda_asr")) cfg.lambda_asr = parse_double_field("lambda_asr", *v);
  if (auto v = kv.take("lambda_lid")) cfg.lambda_lid = parse_double_field("lambda_lid", *v);
  if (auto v = kv.take("detach_collab_weights"))
    cfg.detach_collab_weights = parse_bool_field("detach_collab_weights", *v);
  if (auto v = kv.take("seed")) cfg.seed = parse_u64_field("seed", *v);
}

}  // namespace comoe
