// src/gradcheck.cpp

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

#include "comoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "comoe/errors.hpp"

namespace comoe {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Analytic gradients come from params; central differences perturb and
// evaluate reference, which holds the same values, possibly in a wider type.
template <typename Ref>
GradReport run_check(ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
                     ParamStore<Ref>& reference, const std::function<Tensor<Ref>()>& reference_loss,
                     const GradCheckOptions& options,
                     const std::function<void(ParamStore<double>&)>& after_backward) {
  if (!(options.epsilon > 0.0)) throw ValidationError("finite_diff_check: epsilon must be positive");
  const auto& entries = params.entries();
  const auto& ref_entries = reference.entries();
  if (entries.size() != ref_entries.size())
    throw ValidationError("finite_diff_check: reference has a different parameter count");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& a = entries[k];
    const auto& b = ref_entries[k];
    if (a.name != b.name || a.tensor.shape() != b.tensor.shape())
      throw ValidationError("finite_diff_check: reference parameter mismatch at " + a.name);
    for (std::size_t i = 0; i < a.tensor.size(); ++i) {
      if (static_cast<Ref>(a.tensor.data()[i]) != b.tensor.data()[i])
        throw ValidationError("finite_diff_check: reference values differ in " + a.name);
    }
  }

  params.zero_grad();
  backward(loss_fn());
  if (after_backward) after_backward(params);

  auto evaluate = [&]() {
    NoGradGuard no_grad;
    const Ref v = reference_loss().item();
    if (!std::isfinite(v)) throw NumericalError("finite_diff_check: non-finite loss at perturbed point");
    return v;
  };

  GradReport report;
  std::mt19937_64 rng(options.seed);
  const Ref eps = static_cast<Ref>(options.epsilon);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const Tensor<double>& param = entries[k].tensor;
    Tensor<Ref> ref = ref_entries[k].tensor;
    const std::size_t n = param.size();
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (n > options.max_entries_per_tensor) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_tensor);
      std::sort(indices.begin(), indices.end());
    }
    std::vector<double> analytic(param.grad().begin(), param.grad().end());
    if (analytic.empty()) analytic.assign(n, 0.0);

    double worst = 0.0;
    for (std::size_t i : indices) {
      Ref& slot = ref.mutable_data()[i];
      const Ref saved = slot;
      slot = saved + eps;
      const Ref plus = evaluate();
      slot = saved - eps;
      const Ref minus = evaluate();
      slot = saved;
      const double numeric = static_cast<double>((plus - minus) / (2 * eps));
      worst = std::max(worst, relative_error(analytic[i], numeric));
      ++report.entries_checked;
    }
    report.per_parameter_errors[entries[k].name] = worst;
    if (report.worst_parameter.empty() || worst > report.max_abs_rel_error) {
      report.max_abs_rel_error = worst;
      report.worst_parameter = entries[k].name;
    }
  }
  return report;
}

}  // namespace

GradReport finite_diff_check(ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
                             const GradCheckOptions& options,
                             const std::function<void(ParamStore<double>&)>& after_backward) {
  return run_check<double>(params, loss_fn, params, loss_fn, options, after_backward);
}

GradReport finite_diff_check(ParamStore<double>& params, const std::function<Tensor<double>()>& loss_fn,
                             ParamStore<long double>& reference,
                             const std::function<Tensor<long double>()>& reference_loss,
                             const GradCheckOptions& options,
                             const std::function<void(ParamStore<double>&)>& after_backward) {
  return run_check<long double>(params, loss_fn, reference, reference_loss, options, after_backward);
}

}  // namespace comoe
