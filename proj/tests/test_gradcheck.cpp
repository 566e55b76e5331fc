// tests/test_gradcheck.cpp

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

#include <algorithm>
#include <cmath>

#include "comoe/errors.hpp"
#include "comoe/gradcheck.hpp"
#include "comoe/nn.hpp"
#include "comoe/train.hpp"

using namespace comoe;

namespace {

// f = sum_i c_i * (w_i - t_i)^2 + (w_0 * b_0). The point keeps |f| near 4
// and every nonzero gradient above 0.4, so double roundoff in the central
// difference (about ulp(f) / 2 eps) stays near 1e-10 relative.
struct Quadratic {
  ParamStore<double> store;
  Tensor<double> w, b;
  Quadratic() {
    w = store.add("w", {4}, {1.5, 1.6, 3.4, 3.5});
    b = store.add("b", {2}, {1.5, -0.4});
  }
  Tensor<double> loss() const {
    const auto t = Tensor<double>::from({4}, {1, 2, 3, 4});
    const auto c = Tensor<double>::from({4}, {1.0, 0.5, 2.0, 3.0});
    const auto d = sub(w, t);
    return add(sum(mul(c, mul(d, d))), mul(element(w, 0), element(b, 0)));
  }
};

}  // namespace

TEST(RelativeError, UsesGuardedDenominator) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-12), 1e-12 / 1e-8);
}

TEST(FiniteDiffCheck, QuadraticIsExactToRounding) {
  Quadratic q;
  const GradReport r = finite_diff_check(q.store, [&] { return q.loss(); });
  EXPECT_LT(r.max_abs_rel_error, 1e-9);
  EXPECT_EQ(r.entries_checked, 6u);
  EXPECT_EQ(r.per_parameter_errors.size(), 2u);
}

TEST(FiniteDiffCheck, MaxEqualsLargestPerParameterError) {
  Quadratic q;
  const GradReport r = finite_diff_check(q.store, [&] { return q.loss(); });
  double mx = 0;
  for (const auto& [name, e] : r.per_parameter_errors) mx = std::max(mx, e);
  EXPECT_EQ(r.max_abs_rel_error, mx);
}

TEST(FiniteDiffCheck, ScaledGradientIsFlagged) {
  Quadratic q;
  const GradReport r = finite_diff_check(q.store, [&] { return q.loss(); }, {}, [](ParamStore<double>& s) {
    Tensor<double> b = s.get("b");
    for (double& g : b.mutable_grad()) g *= 1.01;
  });
  EXPECT_EQ(r.worst_parameter, "b");
  EXPECT_NEAR(r.max_abs_rel_error, 0.01, 2e-3);
  EXPECT_LT(r.per_parameter_errors.at("w"), 1e-9);
}

TEST(FiniteDiffCheck, SubsamplesLargeTensors) {
  ParamStore<double> store;
  std::vector<double> init(200);
  for (std::size_t i = 0; i < init.size(); ++i) init[i] = 0.01 * static_cast<double>(i);
  Tensor<double> w = store.add("w", {200}, init);
  GradCheckOptions opts;
  opts.max_entries_per_tensor = 10;
  const GradReport r = finite_diff_check(store, [&] { return sum(mul(w, w)); }, opts);
  EXPECT_EQ(r.entries_checked, 10u);
  // f is about 265 and the smallest gradient 0.02: roundoff bound ~1e-7.
  EXPECT_LT(r.max_abs_rel_error, 1e-6);
}

TEST(FiniteDiffCheck, NonFinitePerturbedLossThrows) {
  ParamStore<double> store;
  Tensor<double> w = store.add("w", {1}, {1e-6});
  // 1/w^2 blows up when the step crosses zero.
  GradCheckOptions opts;
  opts.epsilon = 1e-6;
  EXPECT_THROW(finite_diff_check(store, [&] { return sum(div(Tensor<double>::from({1}, {1.0}), mul(w, w))); }, opts),
               NumericalError);
}

TEST(FiniteDiffCheck, RejectsNonPositiveEpsilon) {
  Quadratic q;
  GradCheckOptions opts;
  opts.epsilon = 0.0;
  EXPECT_THROW(finite_diff_check(q.store, [&] { return q.loss(); }, opts), ValidationError);
}

TEST(ModelGradCheck, TinyCollaborativeModelPasses) {
  const GradReport r = model_grad_check(tiny_grad_check_config());
  EXPECT_LT(r.max_abs_rel_error, 1e-6) << "worst: " << r.worst_parameter;
  EXPECT_GT(r.entries_checked, 500u);
}

TEST(ModelGradCheck, CorruptedGradientFails) {
  const GradReport r = model_grad_check(tiny_grad_check_config(), {}, true);
  EXPECT_GT(r.max_abs_rel_error, 1e-4);
  EXPECT_EQ(r.worst_parameter, "ctc_head.bias");
}

namespace {

// f = c + sum(w * w) with c = 1000: one ulp of f in double is ~1e-13, so a
// double central difference at eps 1e-5 is only good to ~1e-8 absolute.
struct OffsetSquare {
  template <typename Real>
  static Tensor<Real> loss(const Tensor<Real>& w) {
    return add(sum(mul(w, w)), Tensor<Real>::from({1}, {Real(1000)}));
  }
};

}  // namespace

TEST(FiniteDiffCheck, ExtendedReferenceRemovesTheRoundoffFloor) {
  const std::vector<double> init = {2e-5, -3e-5, 0.5};
  ParamStore<double> store;
  Tensor<double> w = store.add("w", {3}, init);
  ParamStore<long double> ref_store;
  Tensor<long double> w_ref = ref_store.add("w", {3}, {init[0], init[1], init[2]});
  const GradReport r = finite_diff_check(store, [&] { return OffsetSquare::loss(w); }, ref_store,
                                         [&] { return OffsetSquare::loss(w_ref); });
  EXPECT_LT(r.max_abs_rel_error, 1e-6);
  EXPECT_EQ(r.entries_checked, 3u);
}

TEST(FiniteDiffCheck, ReferenceMustMatchTheParameters) {
  ParamStore<double> store;
  Tensor<double> w = store.add("w", {2}, {1.0, 2.0});
  ParamStore<long double> other;
  Tensor<long double> v = other.add("w", {2}, {1.0L, 2.5L});
  auto f = [&] { return sum(mul(w, w)); };
  auto g = [&] { return sum(mul(v, v)); };
  EXPECT_THROW(finite_diff_check(store, f, other, g), ValidationError);
  ParamStore<long double> renamed;
  Tensor<long double> u = renamed.add("u", {2}, {1.0L, 2.0L});
  EXPECT_THROW(finite_diff_check(store, f, renamed, [&] { return sum(mul(u, u)); }), ValidationError);
}

TEST(ModelGradCheck, PassesForSeveralInitializations) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig cfg = tiny_grad_check_config();
    cfg.seed = seed;
    const GradReport r = model_grad_check(cfg);
    EXPECT_LT(r.max_abs_rel_error, 1e-6) << "seed " << seed << " worst " << r.worst_parameter;
  }
}
