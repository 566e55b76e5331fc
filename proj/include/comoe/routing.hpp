// include/comoe/routing.hpp

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

// Utterance-level LID routing: pooled bottleneck -> 3 logits -> temperature
// softmax -> hard CN/EN group choice + renormalized inter-group weights.

#include <array>

#include "comoe/autodiff.hpp"
#include "comoe/language.hpp"
#include "comoe/nn.hpp"

namespace comoe {

template <typename Real>
struct RoutingDecision {
  std::array<double, 3> p{};      // [p_ch, p_en, p_cs]
  Lid selected = Lid::CN;         // CN or EN
  std::array<double, 2> w_lid{};  // [w_op, w_cs]
  Tensor<Real> probs;             // differentiable p
  Tensor<Real> w_op;              // differentiable [1] weights; may be detached
  Tensor<Real> w_cs;
};

// Mean over frames, then the affine map to 3 logits.
template <typename Real>
Tensor<Real> compute_lid_logits(const Tensor<Real>& bottleneck, const Linear<Real>& router);

template <typename Real>
Tensor<Real> compute_lid_probs(const Tensor<Real>& lid_logits, double temperature);

// CN iff p_ch >= p_en; p_cs never selects. Throws ValidationError if p is not
// on the simplex within 1e-6.
Lid select_group(const std::array<double, 3>& p);

// [p_sel, p_cs] / (p_sel + p_cs), or [1, 0] when the model has no CS group.
std::array<double, 2> collaboration_weights(const std::array<double, 3>& p, Lid selected, bool has_cs_group);

// Full routing step for one utterance.
template <typename Real>
RoutingDecision<Real> route_utterance(const Tensor<Real>& lid_logits, double temperature, bool has_cs_group,
                                      bool detach_weights);

}  // namespace comoe
