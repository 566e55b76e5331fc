// include/comoe/autodiff.hpp

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

// Minimal reverse-mode automatic differentiation over dense row-major arrays.
//
// A Tensor is a shared handle to a graph node: copying a Tensor aliases the
// same storage. Ops record their parents and a backward closure whenever any
// input requires a gradient and gradient recording is enabled on the current
// thread. Rank-1 tensors are treated as a single row by the row-wise ops.
//
// Instantiated for float (training) and double (gradient checking).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace comoe {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first backward reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

template <typename Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;

  // Throws ValidationError on empty shape, zero-sized dimension, or data length mismatch.
  static Tensor from(Shape shape, std::vector<Real> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  // Product of all but the last dimension (1 for rank-1 tensors).
  std::size_t rows() const;
  std::size_t cols() const { return node_->shape.back(); }

  std::span<const Real> data() const { return node_->data; }
  std::span<Real> mutable_data() { return node_->data; }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  Real item() const;
  Real at(std::size_t i) const { return node_->data[i]; }
  Real at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }

  // Clears the accumulated gradient (keeps the buffer allocated).
  void zero_grad();

  Node<Real>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<Real>>& node_ptr() const noexcept { return node_; }

  static Tensor wrap(std::shared_ptr<Node<Real>> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  std::shared_ptr<Node<Real>> node_;
};

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Populates grad on every reachable node that requires it. Leaf gradients
// accumulate across calls until zeroed; intermediate gradients are reset on
// every call so the graph can be traversed again.
template <typename Real>
void backward(const Tensor<Real>& loss);

template <typename Real>
Tensor<Real> detach(const Tensor<Real>& x);

// [m,k] x [k,n] -> [m,n]
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
// [m,k] x [n,k]^T -> [m,n]
template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor);
// Adds a length-n vector to every row of an [m,n] tensor.
template <typename Real>
Tensor<Real> add_row(const Tensor<Real>& x, const Tensor<Real>& row);
// y[i,:] = s[i] * x[i,:]; s has rows(x) entries.
template <typename Real>
Tensor<Real> scale_rows(const Tensor<Real>& x, const Tensor<Real>& s);
// y = s * x for a single-element s.
template <typename Real>
Tensor<Real> scale_by(const Tensor<Real>& x, const Tensor<Real>& s);

template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x);

// Row-wise exp(x/T) / sum exp(x/T) with max subtraction. With causal set,
// entry (i,j) for j > i is masked out.
template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x, Real temperature = Real(1), bool causal = false);
template <typename Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& x);
// Temperature softmax of a logit vector. Throws on T <= 0.
template <typename Real>
Tensor<Real> softmax_temperature(const Tensor<Real>& logits, Real temperature);

template <typename Real>
Tensor<Real> layer_norm_rows(const Tensor<Real>& x, const Tensor<Real>& gamma,
                             const Tensor<Real>& beta, Real eps = Real(1e-5));

// [frames, d] -> [1, d], arithmetic mean over frames.
template <typename Real>
Tensor<Real> mean_pool_time(const Tensor<Real>& x);

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t start, std::size_t count);
template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts);
template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows);
// Inverse of a partition into gather_rows pieces: out[index[p][r], :] = parts[p][r, :].
// Rows not named by any index stay zero.
template <typename Real>
Tensor<Real> scatter_rows(const std::vector<Tensor<Real>>& parts,
                          const std::vector<std::vector<std::size_t>>& index, std::size_t total_rows);
// Column j of an [m,n] tensor as a length-m vector.
template <typename Real>
Tensor<Real> column(const Tensor<Real>& x, std::size_t j);
// Single entry as a [1] tensor.
template <typename Real>
Tensor<Real> element(const Tensor<Real>& x, std::size_t i);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

// Rows of an embedding table [V,d] selected by ids -> [len, d].
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids);

// Mean over rows of -log softmax(logits[i])[target[i]].
template <typename Real>
Tensor<Real> cross_entropy_rows(const Tensor<Real>& logits, std::span<const int> targets);

// Builds a non-leaf tensor whose gradient is routed by a caller-supplied
// closure. Used by fused ops outside this file (e.g. CTC).
template <typename Real>
Tensor<Real> make_op_result(Shape shape, std::vector<Real> data,
                            std::vector<Tensor<Real>> parents,
                            std::function<void(Node<Real>&)> backward_fn, const char* op_name);

}  // namespace comoe
