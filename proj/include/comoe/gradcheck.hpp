// include/comoe/gradcheck.hpp

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

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "comoe/autodiff.hpp"
#include "comoe/nn.hpp"

namespace comoe {

struct GradReport {
  double max_abs_rel_error = 0.0;
  std::string worst_parameter;
  std::map<std::string, double> per_parameter_errors;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Tensors larger than this are checked on a seeded random subsample of this many entries.
  std::size_t max_entries_per_tensor = 48;
  std::uint64_t seed = 0;
  // model_grad_check only: take the central differences on a long double
  // copy of the model (see the reference overload of finite_diff_check).
  bool extended_reference = true;
};

// Relative error with denominator max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

// Compares analytic gradients of loss_fn() against central differences
// (f(theta + eps) - f(theta - eps)) / 2 eps for every parameter in params.
// after_backward, when set, runs between backward and the comparison and may
// tamper with gradients (used to build corrupted fixtures).
// Throws NumericalError when a perturbed loss is not finite.
GradReport finite_diff_check(ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
                             const GradCheckOptions& options = {},
                             const std::function<void(ParamStore<double>&)>& after_backward = {});

// Same comparison, but the central differences perturb and evaluate a
// reference copy of the parameters held in long double. reference must match
// params in names, shapes and values. In double, roundoff limits a central
// difference to roughly ulp(f) / 2 eps absolute accuracy, which dominates the
// relative error of gradient entries near zero; the wider reference removes
// that floor while the gradients under test stay in double.
GradReport finite_diff_check(ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
                             ParamStore<long double>& reference,
                             const std::function<Tensor<long double>()>& reference_loss,
                             const GradCheckOptions& options = {},
                             const std::function<void(ParamStore<double>&)>& after_backward = {});

}  // namespace comoe
