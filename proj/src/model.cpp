// src/model.cpp

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

#include "comoe/model.hpp"

#include <numeric>
#include <string>

#include "comoe/errors.hpp"

namespace comoe {

namespace {

template <typename Real>
void check_experts(std::span<const FeedForward<Real>> experts, const Tensor<Real>& h, const char* op) {
  if (!h.defined() || h.rank() != 2) throw ValidationError(std::string(op) + ": expected [frames, d] input");
  for (const auto& e : experts) {
    if (e.up.in_features() != h.cols()) throw ValidationError(std::string(op) + ": expert width mismatch");
  }
}

std::vector<int> iota_ids(int first, int count) {
  std::vector<int> ids(static_cast<std::size_t>(count));
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

}  // namespace

template <typename Real>
Tensor<Real> frames_to_tensor(const Utterance& utt) {
  if (utt.num_frames == 0) throw ValidationError(utt.id + ": utterance has no frames");
  std::vector<Real> data(utt.frames.begin(), utt.frames.end());
  return Tensor<Real>::from({utt.num_frames, utt.d_feat}, std::move(data));
}

template <typename Real>
Tensor<Real> encoder_block_forward(const Tensor<Real>& x, const EncoderBlock<Real>& block) {
  const auto* ffn = std::get_if<FeedForward<Real>>(&block.ffn);
  if (!ffn) throw ValidationError("encoder_block_forward: block has an MoE layer at its FFN position");
  if (!x.defined() || x.rank() != 2 || x.cols() != block.attn_norm.gamma.size())
    throw ValidationError("encoder_block_forward: input width does not match d_model");
  const Tensor<Real> q = block.attn_norm(x);
  const Tensor<Real> y = add(x, block.attention(q, q, false));
  return add(y, (*ffn)(block.ffn_norm(y)));
}

template <typename Real>
FusionOutput<Real> bi_encoder_fuse(const Tensor<Real>& h_cn, const Tensor<Real>& h_en, const Linear<Real>& fusion) {
  if (!h_cn.defined() || !h_en.defined() || h_cn.shape() != h_en.shape() || h_cn.rank() != 2)
    throw ValidationError("bi_encoder_fuse: encoder outputs must have equal [frames, d] shapes");
  if (fusion.in_features() != 2 * h_cn.cols() || fusion.out_features() != 2)
    throw ValidationError("bi_encoder_fuse: fusion layer must map 2d -> 2");
  FusionOutput<Real> out;
  out.gate = softmax_rows(fusion(concat_cols<Real>({h_cn, h_en})));
  out.mixed = add(scale_rows(h_cn, column(out.gate, 0)), scale_rows(h_en, column(out.gate, 1)));
  return out;
}

template <typename Real>
MoeOutput<Real> switch_moe_layer(const Tensor<Real>& h, std::span<const FeedForward<Real>> experts,
                                 const Linear<Real>& gate) {
  if (experts.size() != 2) throw ValidationError("switch_moe_layer: exactly two experts required");
  check_experts(experts, h, "switch_moe_layer");
  const std::size_t frames = h.rows();
  MoeOutput<Real> out;
  out.gate = softmax_rows(gate(h));
  out.activation.frame_choice.resize(frames);
  out.activation.rows_per_expert.assign(2, 0);
  std::vector<std::vector<std::size_t>> index(2);
  for (std::size_t t = 0; t < frames; ++t) {
    const int e = out.gate.at(t, 0) >= out.gate.at(t, 1) ? 0 : 1;  // tie goes to the first (CN) expert
    out.activation.frame_choice[t] = e;
    index[static_cast<std::size_t>(e)].push_back(t);
  }
  std::vector<Tensor<Real>> parts;
  std::vector<std::vector<std::size_t>> part_index;
  for (int e = 0; e < 2; ++e) {
    const auto& rows = index[static_cast<std::size_t>(e)];
    if (rows.empty()) continue;
    const Tensor<Real> he = gather_rows(h, std::span<const std::size_t>(rows));
    const Tensor<Real> re = column(gather_rows(out.gate, std::span<const std::size_t>(rows)), static_cast<std::size_t>(e));
    parts.push_back(scale_rows(experts[static_cast<std::size_t>(e)](he), re));
    part_index.push_back(rows);
    out.activation.active_experts.push_back(e);
    out.activation.rows_per_expert[static_cast<std::size_t>(e)] = rows.size();
  }
  out.output = scatter_rows(parts, part_index, frames);
  return out;
}

template <typename Real>
MoeOutput<Real> dense_moe_layer(const Tensor<Real>& h, std::span<const FeedForward<Real>> experts,
                                const Linear<Real>& gate) {
  if (experts.size() < 2) throw ValidationError("dense_moe_layer: at least two experts required");
  check_experts(experts, h, "dense_moe_layer");
  if (gate.out_features() != experts.size()) throw ValidationError("dense_moe_layer: gate width != expert count");
  MoeOutput<Real> out;
  out.gate = softmax_rows(gate(h));
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const Tensor<Real> term = scale_rows(experts[e](h), column(out.gate, e));
    out.output = e == 0 ? term : add(out.output, term);
  }
  out.activation.active_experts = iota_ids(0, static_cast<int>(experts.size()));
  out.activation.rows_per_expert.assign(experts.size(), h.rows());
  return out;
}

template <typename Real>
MoeOutput<Real> group_forward(const Tensor<Real>& h, const ExpertGroup<Real>& group) {
  if (group.experts.empty()) throw ValidationError("collaborative_moe_layer: empty expert group");
  if (group.experts.size() == 1) {
    check_experts(std::span<const FeedForward<Real>>(group.experts), h, "collaborative_moe_layer");
    MoeOutput<Real> out;
    out.output = group.experts[0](h);
    out.activation.active_experts = {0};
    out.activation.rows_per_expert = {h.rows()};
    return out;
  }
  return dense_moe_layer(h, std::span<const FeedForward<Real>>(group.experts), group.gate);
}

template <typename Real>
MoeOutput<Real> collaborative_moe_layer(const Tensor<Real>& h, const CollaborativeMoe<Real>& groups,
                                        const RoutingDecision<Real>* routing) {
  if (!routing) throw ValidationError("collaborative_moe_layer: routing decision absent");
  if (routing->selected == Lid::CS) throw ValidationError("collaborative_moe_layer: selected group must be CN or EN");
  const bool cn = routing->selected == Lid::CN;
  const ExpertGroup<Real>& chosen = cn ? groups.cn : groups.en;
  const int n_cn = static_cast<int>(groups.cn.experts.size());
  const int n_en = static_cast<int>(groups.en.experts.size());
  const int n_cs = static_cast<int>(groups.cs.experts.size());
  const int chosen_first = cn ? 0 : n_cn;

  MoeOutput<Real> out;
  out.activation.rows_per_expert.assign(static_cast<std::size_t>(n_cn + n_en + n_cs), 0);
  auto record = [&](const MoeOutput<Real>& part, int first) {
    for (int e : part.activation.active_experts) {
      out.activation.active_experts.push_back(first + e);
      out.activation.rows_per_expert[static_cast<std::size_t>(first + e)] = h.rows();
    }
  };

  MoeOutput<Real> selected = group_forward(h, chosen);
  record(selected, chosen_first);
  if (n_cs == 0) {
    out.output = selected.output;
    out.gate = selected.gate;
    return out;
  }
  MoeOutput<Real> shared = group_forward(h, groups.cs);
  record(shared, n_cn + n_en);
  out.output = add(scale_by(selected.output, routing->w_op), scale_by(shared.output, routing->w_cs));
  out.gate = shared.gate.defined() ? shared.gate : selected.gate;
  return out;
}

template <typename Real>
EncoderModel<Real>::EncoderModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  ParamBuilder<Real> pb(params_, config_.seed);
  const auto d = static_cast<std::size_t>(config_.d_model);
  if (config_.variant == Variant::bi_encoder) {
    stacks_.push_back(build_stack(pb, "encoder_cn", false));
    stacks_.push_back(build_stack(pb, "encoder_en", false));
    fusion_ = Linear<Real>::make(pb, "fusion", 2 * d, 2);
  } else {
    stacks_.push_back(build_stack(pb, "encoder", config_.variant != Variant::baseline));
  }
  if (config_.variant == Variant::collaborative) {
    router_norm_ = LayerNorm<Real>::make(pb, "router_norm", d);
    router_ = Linear<Real>::make(pb, "router", d, static_cast<std::size_t>(kNumLidClasses));
  }
  final_norm_ = LayerNorm<Real>::make(pb, "final_norm", d);
  ctc_head_ = Linear<Real>::make(pb, "ctc_head", d, static_cast<std::size_t>(config_.vocab_size + 1));
  decoder_ = DecoderParams<Real>::make(pb, "decoder", config_.vocab_size, d, static_cast<std::size_t>(config_.n_heads),
                                       config_.decoder_layers);
}

template <typename Real>
typename EncoderModel<Real>::Stack EncoderModel<Real>::build_stack(ParamBuilder<Real>& pb, const std::string& prefix,
                                                                   bool with_moe) {
  const auto d = static_cast<std::size_t>(config_.d_model);
  const auto ffn = static_cast<std::size_t>(config_.d_ffn);
  Stack s;
  s.input = Linear<Real>::make(pb, prefix + ".input", static_cast<std::size_t>(config_.d_feat), d);
  const int layers = config_.num_shared_layers + config_.num_moe_layers;
  for (int i = 0; i < layers; ++i) {
    const std::string p = prefix + ".block" + std::to_string(i);
    EncoderBlock<Real> b;
    b.attn_norm = LayerNorm<Real>::make(pb, p + ".attn_norm", d);
    b.attention = MultiHeadAttention<Real>::make(pb, p + ".attention", d, static_cast<std::size_t>(config_.n_heads));
    b.ffn_norm = LayerNorm<Real>::make(pb, p + ".ffn_norm", d);
    const bool moe = with_moe && i >= config_.num_shared_layers;
    auto experts = [&](const std::string& q, int n) {
      std::vector<FeedForward<Real>> out;
      for (int e = 0; e < n; ++e) out.push_back(FeedForward<Real>::make(pb, q + ".expert" + std::to_string(e), d, ffn));
      return out;
    };
    auto group = [&](const std::string& q, int n) {
      ExpertGroup<Real> g;
      g.experts = experts(q, n);
      if (n >= 2) g.gate = Linear<Real>::make(pb, q + ".gate", d, static_cast<std::size_t>(n));
      return g;
    };
    if (!moe) {
      b.ffn = FeedForward<Real>::make(pb, p + ".ffn", d, ffn);
    } else if (config_.variant == Variant::dense_moe) {
      DenseMoe<Real> m;
      m.gate = Linear<Real>::make(pb, p + ".moe.gate", d, static_cast<std::size_t>(config_.groups.total()));
      m.experts = experts(p + ".moe", config_.groups.total());
      b.ffn = std::move(m);
    } else if (config_.variant == Variant::switch_sparse) {
      SwitchMoe<Real> m;
      m.gate = Linear<Real>::make(pb, p + ".moe.gate", d, 2);
      m.experts = experts(p + ".moe", 2);
      b.ffn = std::move(m);
    } else {
      CollaborativeMoe<Real> m;
      m.cn = group(p + ".moe.cn", config_.groups.cn);
      m.en = group(p + ".moe.en", config_.groups.en);
      m.cs = group(p + ".moe.cs", config_.groups.cs);
      b.ffn = std::move(m);
    }
    s.blocks.push_back(std::move(b));
  }
  return s;
}

template <typename Real>
Tensor<Real> EncoderModel<Real>::embed(const Stack& stack, const Tensor<Real>& frames) const {
  return add(stack.input(frames), positional_encoding<Real>(frames.rows(), static_cast<std::size_t>(config_.d_model)));
}

template <typename Real>
void EncoderModel<Real>::run_block(const EncoderBlock<Real>& block, Tensor<Real>& x, EncoderOutput<Real>& out) const {
  const Tensor<Real> q = block.attn_norm(x);
  x = add(x, block.attention(q, q, false));
  const Tensor<Real> h = block.ffn_norm(x);
  MoeOutput<Real> moe;
  if (const auto* ffn = std::get_if<FeedForward<Real>>(&block.ffn)) {
    x = add(x, (*ffn)(h));
    return;
  } else if (const auto* dense = std::get_if<DenseMoe<Real>>(&block.ffn)) {
    moe = dense_moe_layer(h, std::span<const FeedForward<Real>>(dense->experts), dense->gate);
  } else if (const auto* sw = std::get_if<SwitchMoe<Real>>(&block.ffn)) {
    moe = switch_moe_layer(h, std::span<const FeedForward<Real>>(sw->experts), sw->gate);
  } else {
    const auto& collab = std::get<CollaborativeMoe<Real>>(block.ffn);
    moe = collaborative_moe_layer(h, collab, out.routing ? &*out.routing : nullptr);
  }
  x = add(x, moe.output);
  out.activation_trace.push_back(std::move(moe.activation));
  if (moe.gate.defined()) out.frame_gates.push_back(moe.gate);
}

template <typename Real>
EncoderOutput<Real> EncoderModel<Real>::forward(const Tensor<Real>& frames) const {
  if (!frames.defined() || frames.rank() != 2 || frames.cols() != static_cast<std::size_t>(config_.d_feat)) {
    throw ValidationError("model_forward: frames must be [T, " + std::to_string(config_.d_feat) + "], got " +
                          (frames.defined() ? shape_to_string(frames.shape()) : std::string("undefined")));
  }
  EncoderOutput<Real> out;
  if (config_.variant == Variant::bi_encoder) {
    std::vector<Tensor<Real>> encoded;
    for (const Stack& stack : stacks_) {
      Tensor<Real> x = embed(stack, frames);
      for (const auto& block : stack.blocks) run_block(block, x, out);
      encoded.push_back(x);
    }
    FusionOutput<Real> fused = bi_encoder_fuse(encoded[0], encoded[1], fusion_);
    out.frame_gates.push_back(fused.gate);
    out.activation_trace.push_back({{0, 1}, {}, {frames.rows(), frames.rows()}});
    out.states = final_norm_(fused.mixed);
    return out;
  }

  const Stack& stack = stacks_[0];
  Tensor<Real> x = embed(stack, frames);
  for (std::size_t i = 0; i < stack.blocks.size(); ++i) {
    if (config_.variant == Variant::collaborative && static_cast<int>(i) == config_.num_shared_layers) {
      // Bottleneck features h_{i-1}: the layer-normalized output of the shared stack.
      out.lid_logits = compute_lid_logits(router_norm_(x), router_);
      out.routing = route_utterance(*out.lid_logits, config_.temperature, config_.groups.cs > 0,
                                    config_.detach_collab_weights);
    }
    run_block(stack.blocks[i], x, out);
  }
  out.states = final_norm_(x);
  return out;
}

template <typename Real>
EncoderOutput<Real> EncoderModel<Real>::forward(const Utterance& utt) const {
  return forward(frames_to_tensor<Real>(utt));
}

template <typename Real>
Tensor<Real> EncoderModel<Real>::ctc_log_probs(const Tensor<Real>& states) const {
  return log_softmax_rows(ctc_head_(states));
}

template <typename Real>
std::size_t EncoderModel<Real>::encoder_param_count() const {
  return params_.num_scalars() - params_.num_scalars_with_prefix("decoder.");
}

#define COMOE_INSTANTIATE(Real)                                                                                     \
  template Tensor<Real> frames_to_tensor<Real>(const Utterance&);                                                   \
  template Tensor<Real> encoder_block_forward(const Tensor<Real>&, const EncoderBlock<Real>&);                      \
  template FusionOutput<Real> bi_encoder_fuse(const Tensor<Real>&, const Tensor<Real>&, const Linear<Real>&);       \
  template MoeOutput<Real> switch_moe_layer(const Tensor<Real>&, std::span<const FeedForward<Real>>,                \
                                            const Linear<Real>&);                                                   \
  template MoeOutput<Real> dense_moe_layer(const Tensor<Real>&, std::span<const FeedForward<Real>>,                 \
                                           const Linear<Real>&);                                                    \
  template MoeOutput<Real> group_forward(const Tensor<Real>&, const ExpertGroup<Real>&);                            \
  template MoeOutput<Real> collaborative_moe_layer(const Tensor<Real>&, const CollaborativeMoe<Real>&,              \
                                                   const RoutingDecision<Real>*);                                   \
  template class EncoderModel<Real>;

COMOE_INSTANTIATE(float)
COMOE_INSTANTIATE(double)
// Reference precision for finite-difference gradient checks.
COMOE_INSTANTIATE(long double)

#undef COMOE_INSTANTIATE

}  // namespace comoe
