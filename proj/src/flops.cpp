// src/flops.cpp

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

#include <algorithm>

#include "comoe/analysis.hpp"

namespace comoe {

namespace {

using u64 = std::uint64_t;

// Cost model for one encoder at a fixed sequence length m.
struct Cost {
  u64 m, d, f, heads;

  u64 linear(u64 rows, u64 in, u64 out, bool bias = true) const { return 2 * rows * in * out + (bias ? rows * out : 0); }
  u64 norm(u64 rows) const { return kLayerNormFlops * rows * d; }
  u64 softmax(u64 elements) const { return kSoftmaxFlops * elements; }

  // Q, V, O projections with bias, K without; QK^T, score scaling, softmax, AV.
  u64 attention() const {
    const u64 projections = 3 * linear(m, d, d) + linear(m, d, d, false);
    const u64 scores = 2 * m * m * d + m * m * heads;
    return projections + scores + softmax(m * m * heads) + 2 * m * m * d;
  }
  // Both layer norms and both residual adds of a block.
  u64 block_frame() const { return 2 * norm(m) + attention() + 2 * m * d; }
  u64 expert() const { return linear(m, d, f) + kSiluFlops * m * f + linear(m, f, d); }
  // Gate, softmax, n experts, per-frame scaling of each output and the sum.
  u64 dense(u64 n) const { return linear(m, d, n) + softmax(m * n) + n * expert() + n * m * d + (n - 1) * m * d; }
  u64 group(u64 n) const { return n == 1 ? expert() : dense(n); }
  // Two-way gate; every frame runs exactly one expert and is scaled by its gate value.
  u64 switch_layer() const { return linear(m, d, 2) + softmax(2 * m) + expert() + m * d; }
  u64 collaborative(u64 n_sel, u64 n_cs) const {
    u64 c = group(n_sel);
    if (n_cs > 0) c += group(n_cs) + 3 * m * d;  // two scalings and the sum
    return c;
  }
  // Bottleneck norm, mean pool, 3-way linear, softmax, renormalized weights.
  u64 routing() const { return norm(m) + m * d + linear(1, d, 3) + softmax(3) + 3; }
};

// Parameter counts, mirroring the model's parameter layout.
struct Params {
  u64 d, f;
  u64 linear(u64 in, u64 out, bool bias = true) const { return in * out + (bias ? out : 0); }
  u64 norm() const { return 2 * d; }
  u64 attention() const { return 3 * linear(d, d) + linear(d, d, false); }
  u64 expert() const { return linear(d, f) + linear(f, d); }
  u64 dense(u64 n) const { return linear(d, n) + n * expert(); }
  u64 group(u64 n) const { return n == 0 ? 0 : n * expert() + (n >= 2 ? linear(d, n) : 0); }
  u64 block_frame() const { return 2 * norm() + attention(); }
};

}  // namespace

nlohmann::json FlopsReport::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : per_layer) layers.push_back({{"name", l.name}, {"flops", l.flops}, {"moe", l.moe_position}});
  return {{"variant", variant},
          {"params", params},
          {"num_frames", num_frames},
          {"flops_total", flops_total},
          {"per_layer", layers},
          {"per_expert_flops", per_expert_flops},
          {"total_experts", total_experts},
          {"activated_experts", activated_experts},
          {"activated_experts_flops", activated_experts_flops},
          {"skipped_experts_flops", skipped_experts_flops}};
}

FlopsReport count_flops(const ModelConfig& config, std::uint64_t num_frames) {
  config.validate();
  const u64 d = static_cast<u64>(config.d_model);
  const u64 f = static_cast<u64>(config.d_ffn);
  const u64 feat = static_cast<u64>(config.d_feat);
  const u64 out_width = static_cast<u64>(config.vocab_size) + 1;
  const u64 n_cn = static_cast<u64>(config.groups.cn);
  const u64 n_en = static_cast<u64>(config.groups.en);
  const u64 n_cs = static_cast<u64>(config.groups.cs);
  const int layers = config.num_shared_layers + config.num_moe_layers;
  const Cost c{num_frames, d, f, static_cast<u64>(config.n_heads)};
  const Params p{d, f};

  FlopsReport r;
  r.variant = std::string(variant_name(config.variant));
  r.num_frames = num_frames;
  r.per_expert_flops = c.expert();
  auto add = [&](std::string name, u64 flops, bool moe = false) { r.per_layer.push_back({std::move(name), flops, moe}); };

  auto plain_stack = [&](const std::string& prefix) {
    add(prefix + "input", c.linear(num_frames, feat, d) + num_frames * d);
    r.params += p.linear(feat, d);
    for (int i = 0; i < layers; ++i) {
      const std::string b = prefix + "block" + std::to_string(i);
      add(b + ".attention", c.block_frame());
      add(b + ".ffn", c.expert());
      r.params += p.block_frame() + p.expert();
    }
  };

  u64 experts_per_layer = 0;
  u64 active_per_layer = 0;
  if (config.variant == Variant::baseline) {
    plain_stack("");
  } else if (config.variant == Variant::bi_encoder) {
    plain_stack("cn.");
    plain_stack("en.");
    add("fusion", c.linear(num_frames, 2 * d, 2) + c.softmax(2 * num_frames) + 3 * num_frames * d);
    r.params += p.linear(2 * d, 2);
  } else {
    add("input", c.linear(num_frames, feat, d) + num_frames * d);
    r.params += p.linear(feat, d);
    const u64 n_sel = std::max(n_cn, n_en);
    for (int i = 0; i < layers; ++i) {
      const std::string b = "block" + std::to_string(i);
      if (config.variant == Variant::collaborative && i == config.num_shared_layers) {
        add("routing", c.routing(), true);
        r.params += p.norm() + p.linear(d, 3);
      }
      add(b + ".attention", c.block_frame());
      r.params += p.block_frame();
      if (i < config.num_shared_layers) {
        add(b + ".ffn", c.expert());
        r.params += p.expert();
        continue;
      }
      switch (config.variant) {
        case Variant::dense_moe: {
          const u64 n = n_cn + n_en + n_cs;
          add(b + ".moe", c.dense(n), true);
          r.params += p.dense(n);
          experts_per_layer = active_per_layer = n;
          break;
        }
        case Variant::switch_sparse:
          add(b + ".moe", c.switch_layer(), true);
          r.params += p.linear(d, 2) + 2 * p.expert();
          experts_per_layer = 2;
          active_per_layer = 1;
          break;
        default:
          add(b + ".moe", c.collaborative(n_sel, n_cs), true);
          r.params += p.group(n_cn) + p.group(n_en) + p.group(n_cs);
          experts_per_layer = n_cn + n_en + n_cs;
          active_per_layer = n_sel + n_cs;
          break;
      }
    }
  }
  add("final", c.norm(num_frames) + c.linear(num_frames, d, out_width) + c.softmax(num_frames * out_width));
  r.params += p.norm() + p.linear(d, out_width);

  const u64 moe_layers = experts_per_layer > 0 ? static_cast<u64>(config.num_moe_layers) : 0;
  r.total_experts = experts_per_layer * moe_layers;
  r.activated_experts = active_per_layer * moe_layers;
  r.activated_experts_flops = r.activated_experts * r.per_expert_flops;
  r.skipped_experts_flops = (r.total_experts - r.activated_experts) * r.per_expert_flops;
  for (const auto& l : r.per_layer) r.flops_total += l.flops;
  return r;
}

ModelConfig full_scale_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.d_model = 256;
  c.n_heads = 4;
  c.d_ffn = 2048;
  c.d_feat = 80;
  c.vocab_size = 5000;
  c.groups = {1, 1, 2};
  c.decoder_layers = 1;
  switch (variant) {
    case Variant::baseline:
    case Variant::bi_encoder:
      c.num_shared_layers = 12;
      c.num_moe_layers = 0;
      break;
    case Variant::switch_sparse:
      c.num_shared_layers = 0;
      c.num_moe_layers = 12;
      break;
    default:
      c.num_shared_layers = 6;
      c.num_moe_layers = 6;
      break;
  }
  return c;
}

}  // namespace comoe
