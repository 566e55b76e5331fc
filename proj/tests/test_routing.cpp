// tests/test_routing.cpp

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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "comoe/errors.hpp"
#include "comoe/routing.hpp"
#include "test_util.hpp"

using namespace comoe;

namespace {

std::array<double, 3> probs_of(const std::array<double, 3>& logits, double t) {
  const auto p = compute_lid_probs(Tensor<double>::from({3}, {logits[0], logits[1], logits[2]}), t);
  return {p.at(0), p.at(1), p.at(2)};
}

}  // namespace

TEST(ComputeLidLogits, PoolsOverTimeThenProjects) {
  ParamStore<double> s;
  ParamBuilder<double> pb(s, 4);
  auto router = Linear<double>::make(pb, "router", 2, 3);
  router.bias.mutable_data()[1] = 0.5;
  const auto h = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 12});  // column means 3, 6
  const auto logits = compute_lid_logits(h, router);
  ASSERT_EQ(logits.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const double expect = 3 * router.weight.at(0, k) + 6 * router.weight.at(1, k) + router.bias.at(k);
    EXPECT_NEAR(logits.at(k), expect, 1e-12);
  }
}

TEST(ComputeLidLogits, RejectsWrongRouterWidth) {
  ParamStore<double> s;
  ParamBuilder<double> pb(s, 4);
  const auto router = Linear<double>::make(pb, "router", 2, 2);
  EXPECT_THROW(compute_lid_logits(Tensor<double>::from({1, 2}, {1, 2}), router), ValidationError);
}

TEST(ComputeLidProbs, TemperatureExamples) {
  const auto p = probs_of({0, 0, 0}, 10);
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3, 1e-12);
  // Logits [10 ln 2, 0, 0] at T = 10 give [2, 1, 1] / 4.
  const auto q = probs_of({10 * std::log(2.0), 0, 0}, 10);
  EXPECT_NEAR(q[0], 0.5, 1e-12);
  EXPECT_NEAR(q[1], 0.25, 1e-12);
  EXPECT_THROW(probs_of({0, 0, 0}, 0), ValidationError);
  EXPECT_THROW(probs_of({0, 0, 0}, -1), ValidationError);
}

TEST(SelectGroup, Examples) {
  EXPECT_EQ(select_group({0.5, 0.2, 0.3}), Lid::CN);
  EXPECT_EQ(select_group({0.2, 0.7, 0.1}), Lid::EN);
  EXPECT_EQ(select_group({0.1, 0.1, 0.8}), Lid::CN);  // CS never selects; tie goes to CN
  EXPECT_EQ(select_group({0.4, 0.4, 0.2}), Lid::CN);
  EXPECT_THROW(select_group({0.5, 0.5, 0.5}), ValidationError);
  EXPECT_THROW(select_group({1.2, -0.2, 0.0}), ValidationError);
}

TEST(CollaborationWeights, Examples) {
  auto w = collaboration_weights({0.5, 0.2, 0.3}, Lid::CN, true);
  EXPECT_NEAR(w[0], 0.625, 1e-12);
  EXPECT_NEAR(w[1], 0.375, 1e-12);
  w = collaboration_weights({0.2, 0.7, 0.1}, Lid::EN, true);
  EXPECT_NEAR(w[0], 0.875, 1e-12);
  EXPECT_NEAR(w[1], 0.125, 1e-12);
  w = collaboration_weights({0.2, 0.7, 0.1}, Lid::EN, false);
  EXPECT_EQ(w, (std::array<double, 2>{1.0, 0.0}));
  EXPECT_THROW(collaboration_weights({0.2, 0.7, 0.1}, Lid::CS, true), ValidationError);
}

TEST(RouteUtterance, HighTemperatureFlattens) {
  const auto r = route_utterance(Tensor<double>::from({3}, {5.0, -3.0, 2.0}), 1e6, true, false);
  for (double v : r.p) EXPECT_NEAR(v, 1.0 / 3, 1e-3);
  EXPECT_NEAR(r.w_lid[0], 0.5, 1e-3);
  EXPECT_NEAR(r.w_lid[1], 0.5, 1e-3);
}

TEST(RouteUtterance, WeightTensorsAgreeWithScalars) {
  const auto r = route_utterance(Tensor<double>::from({3}, {0.3, 1.5, -0.2}), 1.0, true, false);
  EXPECT_EQ(r.selected, Lid::EN);
  EXPECT_NEAR(r.w_op.item(), r.w_lid[0], 1e-15);
  EXPECT_NEAR(r.w_cs.item(), r.w_lid[1], 1e-15);
}

TEST(RouteUtterance, GradientFlowsThroughWeightsUnlessDetached) {
  for (bool detach : {false, true}) {
    auto logits = Tensor<double>::from({3}, {0.3, 1.5, -0.2}, true);
    const auto r = route_utterance(logits, 2.0, true, detach);
    if (detach) {
      EXPECT_FALSE(r.w_op.requires_grad());
      continue;
    }
    backward(r.w_op);
    // w_op = p_en / (p_en + p_cs) = sigmoid((z_en - z_cs) / T); z_ch plays no part.
    const double s = 1.0 / (1.0 + std::exp(-(1.5 + 0.2) / 2.0));
    EXPECT_NEAR(logits.grad()[0], 0.0, 1e-12);
    EXPECT_NEAR(logits.grad()[1], s * (1 - s) / 2.0, 1e-12);
    EXPECT_NEAR(logits.grad()[2], -s * (1 - s) / 2.0, 1e-12);
  }
}

TEST(RouteUtterance, NoCsGroupPinsWeights) {
  const auto r = route_utterance(Tensor<double>::from({3}, {0.0, 1.0, 9.0}), 10.0, false, false);
  EXPECT_EQ(r.w_lid, (std::array<double, 2>{1.0, 0.0}));
  EXPECT_EQ(r.selected, Lid::EN);
}

// Seeded property suite over random logit vectors.
TEST(RoutingProperties, TenThousandRandomLogits) {
  std::mt19937_64 rng(20240);
  std::normal_distribution<double> n(0.0, 4.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::array<double, 3> z{n(rng), n(rng), n(rng)};
    const auto p = probs_of(z, 10.0);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);
    for (double v : p) EXPECT_GE(v, 0.0);
    const Lid sel = select_group(p);
    EXPECT_EQ(sel, z[0] >= z[1] ? Lid::CN : Lid::EN);
    for (double t : {0.5, 1.0, 10.0, 100.0}) EXPECT_EQ(select_group(probs_of(z, t)), sel) << "T=" << t;
    const auto w = collaboration_weights(p, sel, true);
    const double p_sel = p[static_cast<int>(sel)];
    EXPECT_NEAR(w[0], p_sel / (p_sel + p[2]), 1e-9);
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
    EXPECT_GE(w[0], 0.0);
    EXPECT_GE(w[1], 0.0);
  }
}
