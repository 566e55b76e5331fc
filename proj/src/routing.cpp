// src/routing.cpp

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

#include "comoe/routing.hpp"

#include <cmath>
#include <string>

#include "comoe/errors.hpp"

namespace comoe {

template <typename Real>
Tensor<Real> compute_lid_logits(const Tensor<Real>& bottleneck, const Linear<Real>& router) {
  if (!bottleneck.defined() || bottleneck.rank() != 2) throw ValidationError("compute_lid_logits: expected [frames, d]");
  if (router.out_features() != static_cast<std::size_t>(kNumLidClasses))
    throw ValidationError("compute_lid_logits: router must produce 3 logits");
  const Tensor<Real> pooled = mean_pool_time(bottleneck);
  return router(pooled);
}

template <typename Real>
Tensor<Real> compute_lid_probs(const Tensor<Real>& lid_logits, double temperature) {
  if (!(temperature > 0.0)) throw ValidationError("compute_lid_probs: temperature must be positive");
  if (!lid_logits.defined() || lid_logits.size() != static_cast<std::size_t>(kNumLidClasses))
    throw ValidationError("compute_lid_probs: expected 3 logits");
  return softmax_temperature(lid_logits, static_cast<Real>(temperature));
}

Lid select_group(const std::array<double, 3>& p) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("select_group: probabilities must be finite and >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-6) throw ValidationError("select_group: probabilities do not sum to 1");
  return p[0] >= p[1] ? Lid::CN : Lid::EN;
}

std::array<double, 2> collaboration_weights(const std::array<double, 3>& p, Lid selected, bool has_cs_group) {
  if (selected == Lid::CS) throw ValidationError("collaboration_weights: selected group must be CN or EN");
  if (!has_cs_group) return {1.0, 0.0};
  const double sel = p[static_cast<int>(selected)];
  const double denom = sel + p[2];
  if (!(denom > 0.0)) throw NumericalError("collaboration_weights: p_selected + p_cs is zero");
  return {sel / denom, p[2] / denom};
}

template <typename Real>
RoutingDecision<Real> route_utterance(const Tensor<Real>& lid_logits, double temperature, bool has_cs_group,
                                      bool detach_weights) {
  RoutingDecision<Real> r;
  r.probs = compute_lid_probs(lid_logits, temperature);
  for (int i = 0; i < kNumLidClasses; ++i) r.p[i] = static_cast<double>(r.probs.at(i));
  r.selected = select_group(r.p);
  r.w_lid = collaboration_weights(r.p, r.selected, has_cs_group);
  if (!has_cs_group) {
    r.w_op = Tensor<Real>::scalar(Real(1));
    r.w_cs = Tensor<Real>::scalar(Real(0));
    return r;
  }
  const Tensor<Real> p_sel = element(r.probs, static_cast<std::size_t>(r.selected));
  const Tensor<Real> p_cs = element(r.probs, 2);
  const Tensor<Real> denom = add(p_sel, p_cs);
  r.w_op = div(p_sel, denom);
  r.w_cs = div(p_cs, denom);
  if (detach_weights) {
    r.w_op = detach(r.w_op);
    r.w_cs = detach(r.w_cs);
  }
  return r;
}

template Tensor<float> compute_lid_logits(const Tensor<float>&, const Linear<float>&);
template Tensor<double> compute_lid_logits(const Tensor<double>&, const Linear<double>&);
template Tensor<float> compute_lid_probs(const Tensor<float>&, double);
template Tensor<double> compute_lid_probs(const Tensor<double>&, double);
template RoutingDecision<float> route_utterance(const Tensor<float>&, double, bool, bool);
template RoutingDecision<double> route_utterance(const Tensor<double>&, double, bool, bool);
template Tensor<long double> compute_lid_logits(const Tensor<long double>&, const Linear<long double>&);
template Tensor<long double> compute_lid_probs(const Tensor<long double>&, double);
template RoutingDecision<long double> route_utterance(const Tensor<long double>&, double, bool, bool);

}  // namespace comoe
