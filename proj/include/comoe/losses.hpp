// include/comoe/losses.hpp

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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comoe/autodiff.hpp"
#include "comoe/language.hpp"
#include "comoe/nn.hpp"

namespace comoe {

// Negative log-likelihood of labels under CTC. log_probs is [frames, V+1]
// with the blank at index V. Forward-backward in log space.
// Throws ValidationError when the labels cannot fit in the frames or an id is
// out of range.
template <typename Real>
Tensor<Real> ctc_loss(const Tensor<Real>& log_probs, std::span<const int> labels);

// Frames needed to emit labels: length plus one blank per adjacent repeat.
std::size_t ctc_min_frames(std::span<const int> labels);

// Decoder symbol layout for a joint vocabulary of V tokens: outputs are
// tokens 0..V-1 plus end-of-sentence at V; inputs add start-of-sentence at V+1.
struct DecoderSymbols {
  int vocab_size = 0;
  int eos() const { return vocab_size; }
  int sos() const { return vocab_size + 1; }
  int num_outputs() const { return vocab_size + 1; }
  int num_inputs() const { return vocab_size + 2; }
};

template <typename Real>
struct DecoderLayer {
  LayerNorm<Real> self_norm;
  MultiHeadAttention<Real> self_attention;
  LayerNorm<Real> cross_norm;
  MultiHeadAttention<Real> cross_attention;
};

// Teacher-forced transformer decoder standing in for the attention branch.
template <typename Real>
struct DecoderParams {
  DecoderSymbols symbols;
  Tensor<Real> embedding;  // [V+2, d]
  std::vector<DecoderLayer<Real>> layers;
  LayerNorm<Real> final_norm;
  Linear<Real> output;  // d -> V+1

  static DecoderParams make(ParamBuilder<Real>& pb, const std::string& name, int vocab_size, std::size_t d_model,
                            std::size_t heads, int num_layers);
};

// Logits [L+1, V+1] for targets (y_1..y_L, eos) given inputs (sos, y_1..y_L).
template <typename Real>
Tensor<Real> decoder_logits(const Tensor<Real>& encoder_states, std::span<const int> labels,
                            const DecoderParams<Real>& dec);

// Mean per-token cross-entropy of a logit matrix against target ids.
template <typename Real>
Tensor<Real> sequence_cross_entropy(const Tensor<Real>& logits, std::span<const int> targets);

// Targets (y_1..y_L, eos) for a label sequence.
std::vector<int> decoder_targets(std::span<const int> labels, const DecoderSymbols& symbols);

template <typename Real>
Tensor<Real> attention_decoder_loss(const Tensor<Real>& encoder_states, std::span<const int> labels,
                                    const DecoderParams<Real>& dec);

// Cross-entropy of softmax(h_lid) (temperature 1) against the utterance label.
template <typename Real>
Tensor<Real> lid_loss(const Tensor<Real>& lid_logits, Lid label);

struct LossBreakdown {
  double l_att = 0.0;
  double l_ctc = 0.0;
  double l_lid = 0.0;
  double lid_scale = 0.0;
  double total = 0.0;
  double lambda_asr = 0.0;
  double lambda_lid = 0.0;
};

template <typename Real>
struct TotalLoss {
  Tensor<Real> total;
  LossBreakdown breakdown;
};

// total = lambda_asr * l_att + (1 - lambda_asr) * l_ctc + lambda_lid * s * l_lid,
// with s = [lambda_asr * l_att + (1 - lambda_asr) * l_ctc] / max(l_lid, 1e-8)
// evaluated on detached values so no gradient flows through it. forced_scale
// pins s (gradient checks, tests). Without an LID branch s and l_lid are 0.
// Throws NumericalError on non-finite components.
template <typename Real>
TotalLoss<Real> total_loss(const Tensor<Real>& l_att, const Tensor<Real>& l_ctc,
                           const std::optional<Tensor<Real>>& l_lid, double lambda_asr, double lambda_lid,
                           std::optional<double> forced_scale = std::nullopt);

}  // namespace comoe
