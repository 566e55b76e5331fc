// src/metrics.cpp

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

#include <algorithm>
#include <numeric>

#include "comoe/analysis.hpp"
#include "comoe/errors.hpp"

namespace comoe {

std::vector<int> greedy_ctc_decode(std::span<const float> log_probs, std::size_t frames, std::size_t width) {
  if (width < 1 || log_probs.size() != frames * width)
    throw ValidationError("greedy_ctc_decode: matrix size does not match [frames, width]");
  const int blank = static_cast<int>(width) - 1;
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < frames; ++t) {
    const float* row = log_probs.data() + t * width;
    const int best = static_cast<int>(std::max_element(row, row + width) - row);
    if (best != blank && best != prev) out.push_back(best);
    prev = best;
  }
  return out;
}

template <typename Real>
std::vector<int> greedy_ctc_decode(const Tensor<Real>& log_probs) {
  if (!log_probs.defined() || log_probs.rank() != 2) throw ValidationError("greedy_ctc_decode: expected [frames, V+1]");
  std::vector<float> values(log_probs.data().begin(), log_probs.data().end());
  return greedy_ctc_decode(std::span<const float>(values), log_probs.shape()[0], log_probs.shape()[1]);
}

template std::vector<int> greedy_ctc_decode(const Tensor<float>&);
template std::vector<int> greedy_ctc_decode(const Tensor<double>&);

std::size_t edit_distance(std::span<const int> hyp, std::span<const int> ref) {
  std::vector<std::size_t> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double token_error_rate(std::span<const int> hyp, std::span<const int> ref) {
  if (ref.empty()) throw ValidationError("token_error_rate: empty reference");
  return static_cast<double>(edit_distance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace comoe
