// src/nn.cpp

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

#include "comoe/nn.hpp"

#include <cmath>

#include "comoe/errors.hpp"

namespace comoe {

template <typename Real>
Tensor<Real> ParamStore<Real>::add(const std::string& name, Shape shape, std::vector<Real> values) {
  if (contains(name)) throw ValidationError("parameter registered twice: " + name);
  auto t = Tensor<Real>::from(std::move(shape), std::move(values), true);
  entries_.push_back({name, t});
  return t;
}

template <typename Real>
bool ParamStore<Real>::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

template <typename Real>
const Tensor<Real>& ParamStore<Real>::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ValidationError("no parameter named " + name);
}

template <typename Real>
void ParamStore<Real>::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

template <typename Real>
std::size_t ParamStore<Real>::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

template <typename Real>
std::size_t ParamStore<Real>::num_scalars_with_prefix(const std::string& prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.name.rfind(prefix, 0) == 0) n += e.tensor.size();
  }
  return n;
}

template <typename Real>
Tensor<Real> ParamBuilder<Real>::matrix(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
  // Drawn in double so float and double models built from one seed agree.
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<Real> values(fan_in * fan_out);
  for (auto& v : values) v = static_cast<Real>(dist(rng_));
  return store_.add(name, {fan_in, fan_out}, std::move(values));
}

template <typename Real>
Tensor<Real> ParamBuilder<Real>::constant(const std::string& name, Shape shape, Real value) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return store_.add(name, std::move(shape), std::vector<Real>(n, value));
}

template <typename Real>
Linear<Real> Linear<Real>::make(ParamBuilder<Real>& pb, const std::string& name, std::size_t in, std::size_t out,
                                bool with_bias) {
  Linear l;
  l.weight = pb.matrix(name + ".weight", in, out);
  if (with_bias) l.bias = pb.constant(name + ".bias", {out}, Real(0));
  return l;
}

template <typename Real>
Tensor<Real> Linear<Real>::operator()(const Tensor<Real>& x) const {
  Tensor<Real> y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

template <typename Real>
LayerNorm<Real> LayerNorm<Real>::make(ParamBuilder<Real>& pb, const std::string& name, std::size_t dim) {
  return {pb.constant(name + ".gamma", {dim}, Real(1)), pb.constant(name + ".beta", {dim}, Real(0))};
}

template <typename Real>
Tensor<Real> LayerNorm<Real>::operator()(const Tensor<Real>& x) const {
  return layer_norm_rows(x, gamma, beta);
}

template <typename Real>
FeedForward<Real> FeedForward<Real>::make(ParamBuilder<Real>& pb, const std::string& name, std::size_t d_model,
                                          std::size_t d_ffn) {
  FeedForward f;
  f.up = Linear<Real>::make(pb, name + ".up", d_model, d_ffn);
  f.down = Linear<Real>::make(pb, name + ".down", d_ffn, d_model);
  return f;
}

template <typename Real>
Tensor<Real> FeedForward<Real>::operator()(const Tensor<Real>& x) const {
  return down(silu(up(x)));
}

template <typename Real>
MultiHeadAttention<Real> MultiHeadAttention<Real>::make(ParamBuilder<Real>& pb, const std::string& name,
                                                        std::size_t d_model, std::size_t heads) {
  if (heads == 0 || d_model % heads != 0) throw ValidationError("attention: d_model must be divisible by n_heads");
  MultiHeadAttention a;
  a.query = Linear<Real>::make(pb, name + ".query", d_model, d_model);
  a.key = Linear<Real>::make(pb, name + ".key", d_model, d_model, false);
  a.value = Linear<Real>::make(pb, name + ".value", d_model, d_model);
  a.out = Linear<Real>::make(pb, name + ".out", d_model, d_model);
  a.heads = heads;
  return a;
}

template <typename Real>
Tensor<Real> MultiHeadAttention<Real>::operator()(const Tensor<Real>& x, const Tensor<Real>& memory,
                                                  bool causal) const {
  const std::size_t d = query.out_features();
  const std::size_t dh = d / heads;
  const Real inv_sqrt = Real(1) / std::sqrt(static_cast<Real>(dh));
  Tensor<Real> q = query(x);
  Tensor<Real> k = key(memory);
  Tensor<Real> v = value(memory);
  if (heads == 1) {
    Tensor<Real> attn = softmax_rows(scale(matmul_nt(q, k), inv_sqrt), Real(1), causal);
    return out(matmul(attn, v));
  }
  std::vector<Tensor<Real>> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor<Real> qh = slice_cols(q, h * dh, dh);
    Tensor<Real> kh = slice_cols(k, h * dh, dh);
    Tensor<Real> vh = slice_cols(v, h * dh, dh);
    Tensor<Real> attn = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), Real(1), causal);
    per_head.push_back(matmul(attn, vh));
  }
  return out(concat_cols(per_head));
}

template <typename Real>
Tensor<Real> positional_encoding(std::size_t frames, std::size_t d) {
  std::vector<Real> table(frames * d);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(t) * rate;
      table[t * d + i] = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor<Real>::from({frames, d}, std::move(table));
}

template class ParamStore<float>;
template class ParamStore<double>;
template class ParamBuilder<float>;
template class ParamBuilder<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct LayerNorm<float>;
template struct LayerNorm<double>;
template struct FeedForward<float>;
template struct FeedForward<double>;
template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template Tensor<float> positional_encoding(std::size_t, std::size_t);
template Tensor<double> positional_encoding(std::size_t, std::size_t);
// Reference precision for finite-difference gradient checks.
template class ParamStore<long double>;
template class ParamBuilder<long double>;
template struct Linear<long double>;
template struct LayerNorm<long double>;
template struct FeedForward<long double>;
template struct MultiHeadAttention<long double>;
template Tensor<long double> positional_encoding(std::size_t, std::size_t);

}  // namespace comoe
