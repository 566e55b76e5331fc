// include/comoe/config.hpp

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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

namespace comoe {

enum class Variant { baseline, bi_encoder, switch_sparse, dense_moe, collaborative };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view text);

// Expert counts of the (CN, EN, CS) groups.
struct GroupSpec {
  int cn = 1;
  int en = 1;
  int cs = 2;

  int total() const { return cn + en + cs; }
  bool operator==(const GroupSpec&) const = default;
};

struct ModelConfig {
  Variant variant = Variant::collaborative;
  int num_shared_layers = 2;
  int num_moe_layers = 2;
  int d_model = 32;
  int n_heads = 4;
  int d_ffn = 64;
  int d_feat = 16;
  int vocab_size = 40;
  int decoder_layers = 1;
  GroupSpec groups;
  double temperature = 10.0;
  double lambda_asr = 0.7;
  double lambda_lid = 0.1;
  // Stop gradients from flowing into the router through the fusion weights.
  bool detach_collab_weights = false;
  std::uint64_t seed = 1;

  // Throws ValidationError naming the offending field.
  void validate() const;

  // Experts in one MoE layer: the group total for dense/collaborative, 2 for switch.
  int experts_per_layer() const;
  bool has_lid_branch() const { return variant == Variant::collaborative; }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// "key = value" lines; '#' starts a comment. Keeps the line of every key so
// errors can point at it.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, const std::string& source = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> take(const std::string& key);
  // Throws ValidationError listing keys nobody consumed.
  void expect_consumed() const;
  const std::string& source() const { return source_; }
  std::size_t line_of(const std::string& key) const;

 private:
  std::string source_;
  std::map<std::string, std::pair<std::string, std::size_t>> values_;
  std::map<std::string, bool> consumed_;
};

// Typed field readers; errors name the key.
int parse_int_field(const std::string& key, const std::string& value);
double parse_double_field(const std::string& key, const std::string& value);
std::uint64_t parse_u64_field(const std::string& key, const std::string& value);
bool parse_bool_field(const std::string& key, const std::string& value);
GroupSpec parse_group_spec(const std::string& key, const std::string& value);

// Consumes model keys from kv into cfg. d_feat and vocab_size are reported
// back through the optionals when present, so callers can check them
// against a corpus.
void apply_model_keys(KeyValueFile& kv, ModelConfig& cfg, std::optional<int>* d_feat_set = nullptr,
                      std::optional<int>* vocab_set = nullptr);

}  // namespace comoe
