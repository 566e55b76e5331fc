// include/comoe/model.hpp

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

// Encoder architectures sharing one forward interface:
//   baseline       plain pre-norm attention + FFN blocks
//   bi_encoder     two parallel stacks fused per frame by a learned 2-way gate
//   switch_sparse  frame-level top-1 choice between two experts
//   dense_moe      every expert evaluated, softmax-gated per frame
//   collaborative  utterance-level LID routing to one monolingual group,
//                  fused with the code-switching group by renormalized LID
//                  weights; dense gating inside each group
// MoE layers sit at the FFN position of the last num_moe_layers blocks.

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "comoe/autodiff.hpp"
#include "comoe/config.hpp"
#include "comoe/losses.hpp"
#include "comoe/nn.hpp"
#include "comoe/routing.hpp"
#include "comoe/synth_data.hpp"

namespace comoe {

// Which experts ran in one MoE layer. Expert ids are layer-local; for the
// collaborative layer they are numbered CN group, then EN group, then CS group.
struct LayerActivation {
  std::vector<int> active_experts;
  // Per-frame choice, filled for frame-level routing only.
  std::vector<int> frame_choice;
  // Frames pushed through each expert.
  std::vector<std::size_t> rows_per_expert;

  bool operator==(const LayerActivation&) const = default;
};

template <typename Real>
struct MoeOutput {
  Tensor<Real> output;
  Tensor<Real> gate;  // [frames, n] frame gate; undefined when no gate ran
  LayerActivation activation;
};

template <typename Real>
struct FusionOutput {
  Tensor<Real> mixed;
  Tensor<Real> gate;  // [frames, 2], columns (alpha_cn, alpha_en)
};

template <typename Real>
struct DenseMoe {
  Linear<Real> gate;
  std::vector<FeedForward<Real>> experts;
};

template <typename Real>
struct SwitchMoe {
  Linear<Real> gate;
  std::vector<FeedForward<Real>> experts;  // [E_ch, E_en]
};

template <typename Real>
struct ExpertGroup {
  std::vector<FeedForward<Real>> experts;
  Linear<Real> gate;  // defined only when the group has 2+ experts
};

template <typename Real>
struct CollaborativeMoe {
  ExpertGroup<Real> cn;
  ExpertGroup<Real> en;
  ExpertGroup<Real> cs;  // may be empty
};

template <typename Real>
using FfnSlot = std::variant<FeedForward<Real>, DenseMoe<Real>, SwitchMoe<Real>, CollaborativeMoe<Real>>;

template <typename Real>
struct EncoderBlock {
  LayerNorm<Real> attn_norm;
  MultiHeadAttention<Real> attention;
  LayerNorm<Real> ffn_norm;
  FfnSlot<Real> ffn;
};

// Pre-norm block with a plain FFN: x + Attn(LN x), then + FFN(LN .).
// Throws ValidationError if the block holds an MoE slot or shapes disagree.
template <typename Real>
Tensor<Real> encoder_block_forward(const Tensor<Real>& x, const EncoderBlock<Real>& block);

// Per-frame [a_cn, a_en] = softmax(Linear(concat(h_cn, h_en))); h_mix = a_cn h_cn + a_en h_en.
template <typename Real>
FusionOutput<Real> bi_encoder_fuse(const Tensor<Real>& h_cn, const Tensor<Real>& h_en, const Linear<Real>& fusion);

// r_t = softmax(W h_t + b); y_t = r_t^ch E_ch(h_t) if r_t^ch >= r_t^en else r_t^en E_en(h_t).
// Each expert only sees the frames routed to it.
template <typename Real>
MoeOutput<Real> switch_moe_layer(const Tensor<Real>& h, std::span<const FeedForward<Real>> experts,
                                 const Linear<Real>& gate);

// y_t = sum_e g_e(h_t) E_e(h_t) with g = softmax(Linear(h_t)).
template <typename Real>
MoeOutput<Real> dense_moe_layer(const Tensor<Real>& h, std::span<const FeedForward<Real>> experts,
                                const Linear<Real>& gate);

// Single expert output, or the dense combination over the group.
template <typename Real>
MoeOutput<Real> group_forward(const Tensor<Real>& h, const ExpertGroup<Real>& group);

// y = w_op GroupOut(selected) + w_cs GroupOut(cs); y = GroupOut(selected) without a CS group.
// The non-selected monolingual group is never evaluated.
template <typename Real>
MoeOutput<Real> collaborative_moe_layer(const Tensor<Real>& h, const CollaborativeMoe<Real>& groups,
                                        const RoutingDecision<Real>* routing);

template <typename Real>
struct EncoderOutput {
  Tensor<Real> states;  // [frames, d_model]
  std::optional<Tensor<Real>> lid_logits;
  std::optional<RoutingDecision<Real>> routing;
  std::vector<LayerActivation> activation_trace;  // one entry per MoE layer
  std::vector<Tensor<Real>> frame_gates;
};

template <typename Real>
class EncoderModel {
 public:
  // Builds and initializes all parameters from config.seed.
  explicit EncoderModel(ModelConfig config);

  EncoderModel(const EncoderModel&) = delete;
  EncoderModel& operator=(const EncoderModel&) = delete;
  EncoderModel(EncoderModel&&) = default;

  EncoderOutput<Real> forward(const Tensor<Real>& frames) const;
  EncoderOutput<Real> forward(const Utterance& utt) const;

  // log_softmax(Linear(states)) over V tokens + blank.
  Tensor<Real> ctc_log_probs(const Tensor<Real>& states) const;

  const DecoderParams<Real>& decoder() const { return decoder_; }
  const ModelConfig& config() const { return config_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }
  // Everything except the attention decoder.
  std::size_t encoder_param_count() const;

  const std::vector<EncoderBlock<Real>>& blocks() const { return stacks_[0].blocks; }
  const Linear<Real>& router() const { return router_; }
  const LayerNorm<Real>& router_norm() const { return router_norm_; }

 private:
  struct Stack {
    Linear<Real> input;
    std::vector<EncoderBlock<Real>> blocks;
  };

  Stack build_stack(ParamBuilder<Real>& pb, const std::string& prefix, bool with_moe);
  Tensor<Real> embed(const Stack& stack, const Tensor<Real>& frames) const;
  void run_block(const EncoderBlock<Real>& block, Tensor<Real>& x, EncoderOutput<Real>& out) const;

  ModelConfig config_;
  ParamStore<Real> params_;
  std::vector<Stack> stacks_;
  LayerNorm<Real> router_norm_;  // collaborative only: normalizes the bottleneck
  Linear<Real> router_;           // collaborative only
  Linear<Real> fusion_;  // bi_encoder only
  LayerNorm<Real> final_norm_;
  Linear<Real> ctc_head_;
  DecoderParams<Real> decoder_;
};

template <typename Real>
Tensor<Real> frames_to_tensor(const Utterance& utt);

}  // namespace comoe
