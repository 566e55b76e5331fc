// include/comoe/nn.hpp

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

// Named parameter storage and the small layers the encoder and decoder are
// built from.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "comoe/autodiff.hpp"

namespace comoe {

template <typename Real>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> tensor;
  };

  // Registers a trainable leaf. Names must be unique.
  Tensor<Real> add(const std::string& name, Shape shape, std::vector<Real> values);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool contains(const std::string& name) const;
  // Throws ValidationError naming the missing parameter.
  const Tensor<Real>& get(const std::string& name) const;

  void zero_grad();
  std::size_t num_scalars() const;
  std::size_t num_scalars_with_prefix(const std::string& prefix) const;

 private:
  std::vector<Entry> entries_;
};

// Creates parameters in a fixed order from a seeded engine:
// Glorot-uniform matrices, zero biases, unit/zero layer-norm affines.
template <typename Real>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<Real>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  Tensor<Real> matrix(const std::string& name, std::size_t fan_in, std::size_t fan_out);
  Tensor<Real> constant(const std::string& name, Shape shape, Real value);

 private:
  ParamStore<Real>& store_;
  std::mt19937_64 rng_;
};

template <typename Real>
struct Linear {
  Tensor<Real> weight;  // [in, out]
  Tensor<Real> bias;    // [out]; undefined for bias-free maps

  static Linear make(ParamBuilder<Real>& pb, const std::string& name, std::size_t in, std::size_t out,
                     bool with_bias = true);
  Tensor<Real> operator()(const Tensor<Real>& x) const;
  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
};

template <typename Real>
struct LayerNorm {
  Tensor<Real> gamma;
  Tensor<Real> beta;

  static LayerNorm make(ParamBuilder<Real>& pb, const std::string& name, std::size_t dim);
  Tensor<Real> operator()(const Tensor<Real>& x) const;
};

// Position-wise two-layer network with SiLU; also the expert network of every MoE layer.
template <typename Real>
struct FeedForward {
  Linear<Real> up;
  Linear<Real> down;

  static FeedForward make(ParamBuilder<Real>& pb, const std::string& name, std::size_t d_model, std::size_t d_ffn);
  Tensor<Real> operator()(const Tensor<Real>& x) const;
};

// Multi-head scaled dot-product attention. Keys carry no bias: a key bias
// shifts every score in a row equally and softmax cancels it.
template <typename Real>
struct MultiHeadAttention {
  Linear<Real> query;
  Linear<Real> key;
  Linear<Real> value;
  Linear<Real> out;
  std::size_t heads = 1;

  static MultiHeadAttention make(ParamBuilder<Real>& pb, const std::string& name, std::size_t d_model,
                                 std::size_t heads);
  Tensor<Real> operator()(const Tensor<Real>& x, const Tensor<Real>& memory, bool causal) const;
};

// Sinusoidal position table [frames, d].
template <typename Real>
Tensor<Real> positional_encoding(std::size_t frames, std::size_t d);

}  // namespace comoe
