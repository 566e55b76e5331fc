// include/comoe/analysis.hpp

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

// Compute accounting, decoding and scoring.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comoe/autodiff.hpp"
#include "comoe/config.hpp"
#include "comoe/model.hpp"
#include "comoe/synth_data.hpp"
#include "json.hpp"

namespace comoe {

// ---------------------------------------------------------------------------
// FLOPs and parameter counting.
//
// Conventions: a multiply-accumulate is 2 FLOPs, so an [m,k]x[k,n] product
// costs 2mkn; bias adds, residual adds and scalings cost one FLOP per element;
// layer norm costs kLayerNormFlops and softmax kSoftmaxFlops per element,
// SiLU kSiluFlops per element. Attention includes the quadratic QK^T and AV
// products. Collaborative layers are charged for the larger of the CN/EN
// groups plus the CS group; the smaller monolingual group is reported as
// skipped. The attention decoder is not counted.

inline constexpr std::uint64_t kLayerNormFlops = 8;
inline constexpr std::uint64_t kSoftmaxFlops = 5;
inline constexpr std::uint64_t kSiluFlops = 4;

struct LayerFlops {
  std::string name;
  std::uint64_t flops = 0;
  // True for entries at the FFN position of an MoE layer and for routing.
  bool moe_position = false;
};

struct FlopsReport {
  std::string variant;
  std::uint64_t params = 0;  // encoder + CTC head
  std::uint64_t num_frames = 0;
  std::uint64_t flops_total = 0;
  std::vector<LayerFlops> per_layer;
  std::uint64_t per_expert_flops = 0;  // one expert FFN over the whole sequence
  std::uint64_t total_experts = 0;     // summed over MoE layers
  std::uint64_t activated_experts = 0;
  std::uint64_t activated_experts_flops = 0;
  std::uint64_t skipped_experts_flops = 0;

  nlohmann::json to_json() const;
};

FlopsReport count_flops(const ModelConfig& config, std::uint64_t num_frames);

// Full-scale encoder for one of the architectures: d=256, 4 heads,
// FFN 2048, 12 layers (6 shared + 6 MoE where the variant has MoE layers;
// all 12 MoE for switch_sparse), 5000 output tokens.
ModelConfig full_scale_config(Variant variant);

// ---------------------------------------------------------------------------
// Decoding and scoring.

// Per-frame argmax, collapse repeats, drop blanks (blank = last column).
std::vector<int> greedy_ctc_decode(std::span<const float> log_probs, std::size_t frames, std::size_t width);

template <typename Real>
std::vector<int> greedy_ctc_decode(const Tensor<Real>& log_probs);

// Unit-cost Levenshtein distance.
std::size_t edit_distance(std::span<const int> hyp, std::span<const int> ref);

// edit_distance / |ref|. Throws ValidationError on an empty reference.
double token_error_rate(std::span<const int> hyp, std::span<const int> ref);

struct ClassScore {
  std::size_t utterances = 0;
  std::size_t edits = 0;
  std::size_t ref_tokens = 0;
  double error_rate = 0.0;  // edits / ref_tokens
};

struct EvalReport {
  std::array<ClassScore, 3> per_class;  // indexed by Lid
  double average = 0.0;                 // per-class rates weighted by utterance count
  std::optional<double> lid_accuracy;   // models with an LID branch only
  std::size_t utterances = 0;

  nlohmann::json to_json() const;
  bool operator==(const EvalReport& other) const { return to_json() == other.to_json(); }
};

struct Prediction {
  std::vector<int> hypothesis;
  std::optional<std::array<double, 3>> lid_probs;
};

// Scores predictions per LID class. Throws ValidationError on an empty split.
EvalReport evaluate(std::span<const Utterance> split, const std::function<Prediction(const Utterance&)>& predict);

template <typename Real>
Prediction predict(const EncoderModel<Real>& model, const Utterance& utt);

template <typename Real>
EvalReport evaluate(const EncoderModel<Real>& model, std::span<const Utterance> split);

// Fixed-width table of the report for terminals.
std::string format_eval_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace comoe
