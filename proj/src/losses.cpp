// src/losses.cpp

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

#include "comoe/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "comoe/errors.hpp"

namespace comoe {

namespace {

// Forward-backward accumulates in at least double precision.
template <typename Real>
using CtcAcc = std::conditional_t<std::is_same_v<Real, float>, double, Real>;

template <typename Acc>
constexpr Acc kNegInf = -std::numeric_limits<Acc>::infinity();

template <typename Acc>
Acc log_add(Acc a, Acc b) {
  if (a == kNegInf<Acc>) return b;
  if (b == kNegInf<Acc>) return a;
  const Acc mx = std::max(a, b);
  return mx + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> labels) {
  std::size_t need = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++need;
  }
  return need;
}

template <typename Real>
Tensor<Real> ctc_loss(const Tensor<Real>& log_probs, std::span<const int> labels) {
  if (!log_probs.defined() || log_probs.rank() != 2) throw ValidationError("ctc_loss: expected [frames, V+1]");
  const std::size_t frames = log_probs.shape()[0];
  const std::size_t width = log_probs.shape()[1];
  if (width < 2) throw ValidationError("ctc_loss: need at least one label symbol besides blank");
  const int blank = static_cast<int>(width) - 1;
  for (int l : labels) {
    if (l < 0 || l >= blank) throw ValidationError("ctc_loss: label id " + std::to_string(l) + " out of range");
  }
  if (ctc_min_frames(labels) > frames) {
    throw ValidationError("ctc_loss: label sequence needs " + std::to_string(ctc_min_frames(labels)) +
                          " frames, only " + std::to_string(frames) + " available");
  }

  using Acc = CtcAcc<Real>;
  constexpr Acc neg_inf = kNegInf<Acc>;
  const std::size_t states = 2 * labels.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto lp = [&](std::size_t t, int k) { return static_cast<Acc>(log_probs.at(t * width + static_cast<std::size_t>(k))); };
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<Acc> alpha(frames * states, neg_inf);
  std::vector<Acc> beta(frames * states, neg_inf);
  alpha[0] = lp(0, ext[0]);
  if (states > 1) alpha[1] = lp(0, ext[1]);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      Acc a = alpha[(t - 1) * states + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * states + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * states + s - 2]);
      alpha[t * states + s] = a == neg_inf ? neg_inf : a + lp(t, ext[s]);
    }
  }
  const std::size_t last = frames - 1;
  beta[last * states + states - 1] = lp(last, ext[states - 1]);
  if (states > 1) beta[last * states + states - 2] = lp(last, ext[states - 2]);
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      Acc b = beta[(t + 1) * states + s];
      if (s + 1 < states) b = log_add(b, beta[(t + 1) * states + s + 1]);
      if (s + 2 < states && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * states + s + 2]);
      beta[t * states + s] = b == neg_inf ? neg_inf : b + lp(t, ext[s]);
    }
  }
  Acc log_likelihood = alpha[last * states + states - 1];
  if (states > 1) log_likelihood = log_add(log_likelihood, alpha[last * states + states - 2]);
  if (!std::isfinite(log_likelihood)) throw NumericalError("ctc_loss: no alignment has nonzero probability");

  // d(-log P)/d log y_t(k) = -sum_{s: ext[s]=k} alpha_t(s) beta_t(s) / (y_t(k) P)
  std::vector<Real> dlp(frames * width, Real(0));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      const Acc ab = alpha[t * states + s] + beta[t * states + s];
      if (ab == neg_inf) continue;
      dlp[t * width + static_cast<std::size_t>(ext[s])] -=
          static_cast<Real>(std::exp(ab - lp(t, ext[s]) - log_likelihood));
    }
  }
  return make_op_result<Real>({1}, {static_cast<Real>(-log_likelihood)}, {log_probs},
                              [dlp = std::move(dlp)](Node<Real>& self) {
                                auto& parent = self.parents[0];
                                const Real g = self.grad[0];
                                for (std::size_t i = 0; i < dlp.size(); ++i) parent->grad[i] += g * dlp[i];
                              },
                              "ctc_loss");
}

template <typename Real>
DecoderParams<Real> DecoderParams<Real>::make(ParamBuilder<Real>& pb, const std::string& name, int vocab_size,
                                              std::size_t d_model, std::size_t heads, int num_layers) {
  DecoderParams d;
  d.symbols.vocab_size = vocab_size;
  d.embedding = pb.matrix(name + ".embedding", static_cast<std::size_t>(d.symbols.num_inputs()), d_model);
  for (int i = 0; i < num_layers; ++i) {
    const std::string p = name + ".layer" + std::to_string(i);
    DecoderLayer<Real> layer;
    layer.self_norm = LayerNorm<Real>::make(pb, p + ".self_norm", d_model);
    layer.self_attention = MultiHeadAttention<Real>::make(pb, p + ".self_attention", d_model, heads);
    layer.cross_norm = LayerNorm<Real>::make(pb, p + ".cross_norm", d_model);
    layer.cross_attention = MultiHeadAttention<Real>::make(pb, p + ".cross_attention", d_model, heads);
    d.layers.push_back(std::move(layer));
  }
  d.final_norm = LayerNorm<Real>::make(pb, name + ".final_norm", d_model);
  d.output = Linear<Real>::make(pb, name + ".output", d_model, static_cast<std::size_t>(d.symbols.num_outputs()));
  return d;
}

std::vector<int> decoder_targets(std::span<const int> labels, const DecoderSymbols& symbols) {
  std::vector<int> targets(labels.begin(), labels.end());
  targets.push_back(symbols.eos());
  return targets;
}

template <typename Real>
Tensor<Real> decoder_logits(const Tensor<Real>& encoder_states, std::span<const int> labels,
                            const DecoderParams<Real>& dec) {
  if (labels.empty()) throw ValidationError("attention_decoder_loss: empty label sequence");
  for (int l : labels) {
    if (l < 0 || l >= dec.symbols.vocab_size)
      throw ValidationError("attention_decoder_loss: label id " + std::to_string(l) + " out of range");
  }
  std::vector<int> inputs;
  inputs.reserve(labels.size() + 1);
  inputs.push_back(dec.symbols.sos());
  inputs.insert(inputs.end(), labels.begin(), labels.end());
  const std::size_t d = dec.embedding.shape()[1];
  Tensor<Real> x = add(embedding(dec.embedding, std::span<const int>(inputs)),
                       positional_encoding<Real>(inputs.size(), d));
  for (const auto& layer : dec.layers) {
    const Tensor<Real> q = layer.self_norm(x);
    x = add(x, layer.self_attention(q, q, true));
    x = add(x, layer.cross_attention(layer.cross_norm(x), encoder_states, false));
  }
  return dec.output(dec.final_norm(x));
}

template <typename Real>
Tensor<Real> sequence_cross_entropy(const Tensor<Real>& logits, std::span<const int> targets) {
  return cross_entropy_rows(logits, targets);
}

template <typename Real>
Tensor<Real> attention_decoder_loss(const Tensor<Real>& encoder_states, std::span<const int> labels,
                                    const DecoderParams<Real>& dec) {
  const Tensor<Real> logits = decoder_logits(encoder_states, labels, dec);
  const std::vector<int> targets = decoder_targets(labels, dec.symbols);
  return sequence_cross_entropy(logits, std::span<const int>(targets));
}

template <typename Real>
Tensor<Real> lid_loss(const Tensor<Real>& lid_logits, Lid label) {
  if (!lid_logits.defined() || lid_logits.size() != static_cast<std::size_t>(kNumLidClasses))
    throw ValidationError("lid_loss: expected 3 logits");
  const int target = static_cast<int>(label);
  if (target < 0 || target >= kNumLidClasses) throw ValidationError("lid_loss: invalid LID label");
  return cross_entropy_rows(lid_logits, std::span<const int>(&target, 1));
}

template <typename Real>
TotalLoss<Real> total_loss(const Tensor<Real>& l_att, const Tensor<Real>& l_ctc,
                           const std::optional<Tensor<Real>>& l_lid, double lambda_asr, double lambda_lid,
                           std::optional<double> forced_scale) {
  TotalLoss<Real> out;
  LossBreakdown& b = out.breakdown;
  b.lambda_asr = lambda_asr;
  b.lambda_lid = lambda_lid;
  b.l_att = static_cast<double>(l_att.item());
  b.l_ctc = static_cast<double>(l_ctc.item());
  if (!std::isfinite(b.l_att) || !std::isfinite(b.l_ctc)) throw NumericalError("total_loss: non-finite ASR loss");
  const double asr = lambda_asr * b.l_att + (1.0 - lambda_asr) * b.l_ctc;
  Tensor<Real> total =
      add(scale(l_att, static_cast<Real>(lambda_asr)), scale(l_ctc, static_cast<Real>(1.0 - lambda_asr)));
  if (l_lid) {
    b.l_lid = static_cast<double>(l_lid->item());
    if (!std::isfinite(b.l_lid)) throw NumericalError("total_loss: non-finite LID loss");
    b.lid_scale = forced_scale ? *forced_scale : asr / std::max(b.l_lid, 1e-8);
    if (!std::isfinite(b.lid_scale)) throw NumericalError("total_loss: non-finite LID scale");
    if (lambda_lid != 0.0) total = add(total, scale(*l_lid, static_cast<Real>(lambda_lid * b.lid_scale)));
  }
  b.total = asr + lambda_lid * b.lid_scale * b.l_lid;
  out.total = total;
  return out;
}

#define COMOE_INSTANTIATE(Real)                                                                                   \
  template Tensor<Real> ctc_loss(const Tensor<Real>&, std::span<const int>);                                     \
  template struct DecoderParams<Real>;                                                                            \
  template Tensor<Real> decoder_logits(const Tensor<Real>&, std::span<const int>, const DecoderParams<Real>&);   \
  template Tensor<Real> sequence_cross_entropy(const Tensor<Real>&, std::span<const int>);                       \
  template Tensor<Real> attention_decoder_loss(const Tensor<Real>&, std::span<const int>,                        \
                                               const DecoderParams<Real>&);                                       \
  template Tensor<Real> lid_loss(const Tensor<Real>&, Lid);                                                       \
  template TotalLoss<Real> total_loss(const Tensor<Real>&, const Tensor<Real>&, const std::optional<Tensor<Real>>&, \
                                      double, double, std::optional<double>);

COMOE_INSTANTIATE(float)
COMOE_INSTANTIATE(double)
// Reference precision for finite-difference gradient checks.
COMOE_INSTANTIATE(long double)

#undef COMOE_INSTANTIATE

}  // namespace comoe
