// src/autodiff.cpp

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

#include "comoe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "comoe/errors.hpp"

namespace comoe {

namespace {

thread_local bool g_grad_enabled = true;

template <typename Real>
using NodePtr = std::shared_ptr<Node<Real>>;

template <typename Real>
void ensure_finite(const std::vector<Real>& values, const char* op) {
  for (Real v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string(op) + ": non-finite output");
  }
}

template <typename Real>
void require_rank2(const Tensor<Real>& x, const char* op) {
  if (!x.defined()) throw ValidationError(std::string(op) + ": undefined tensor");
  if (x.rank() != 2) {
    throw ValidationError(std::string(op) + ": expected rank-2 tensor, got " + shape_to_string(x.shape()));
  }
}

template <typename Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ValidationError(std::string(op) + ": undefined tensor");
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                          shape_to_string(b.shape()));
  }
}

// Gradient buffer of a parent that participates in backward, or nullptr.
template <typename Real>
Real* grad_of(const NodePtr<Real>& n) {
  return n->requires_grad ? n->grad.data() : nullptr;
}

// c[m,n] += a[m,k] * b[k,n]
template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
template <typename Real>
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* brow = b + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]
template <typename Real>
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Real>
bool any_requires_grad(const std::vector<Tensor<Real>>& parents) {
  for (const auto& p : parents) {
    if (p.requires_grad()) return true;
  }
  return false;
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename Real>
Tensor<Real> Tensor<Real>::from(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape.empty()) throw ValidationError("tensor: empty shape");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw ValidationError("tensor: zero-sized dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  if (data.size() != n) {
    throw ValidationError("tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_to_string(shape));
  }
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

template <typename Real>
Tensor<Real> Tensor<Real>::zeros(Shape shape, bool requires_grad) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return from(std::move(shape), std::vector<Real>(n, Real(0)), requires_grad);
}

template <typename Real>
Tensor<Real> Tensor<Real>::scalar(Real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename Real>
std::size_t Tensor<Real>::rows() const {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < node_->shape.size(); ++i) r *= node_->shape[i];
  return r;
}

template <typename Real>
Real Tensor<Real>::item() const {
  if (size() != 1) throw ValidationError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename Real>
void Tensor<Real>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

template <typename Real>
Tensor<Real> make_op_result(Shape shape, std::vector<Real> data, std::vector<Tensor<Real>> parents,
                            std::function<void(Node<Real>&)> backward_fn, const char* op_name) {
  ensure_finite(data, op_name);
  auto node = std::make_shared<Node<Real>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled && any_requires_grad(parents)) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward = std::move(backward_fn);
  }
  return Tensor<Real>::wrap(std::move(node));
}

template <typename Real>
void backward(const Tensor<Real>& loss) {
  if (!loss.defined()) throw ValidationError("backward: undefined loss");
  if (loss.size() != 1) throw ValidationError("backward: loss must be a scalar, got " + shape_to_string(loss.shape()));
  if (!loss.requires_grad()) throw ValidationError("backward: loss does not depend on any parameter (detached)");

  // Iterative post-order DFS; each node is visited once.
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<Real>* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node<Real>* n : order) {
    if (n->grad.size() != n->data.size()) {
      n->grad.assign(n->data.size(), Real(0));
    } else if (!n->is_leaf) {
      std::fill(n->grad.begin(), n->grad.end(), Real(0));
    }
  }
  loss.node()->grad[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

template <typename Real>
Tensor<Real> detach(const Tensor<Real>& x) {
  return Tensor<Real>::from(x.shape(), std::vector<Real>(x.data().begin(), x.data().end()), false);
}

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ValidationError("matmul: inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                          shape_to_string(b.shape()));
  }
  std::vector<Real> out(m * n, Real(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result<Real>({m, n}, std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (Real* ga = grad_of(pa)) gemm_nt(self.grad.data(), pb->data.data(), ga, m, n, k);
    if (Real* gb = grad_of(pb)) gemm_tn(pa->data.data(), self.grad.data(), gb, m, k, n);
  }, "matmul");
}

template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ValidationError("matmul_nt: inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                          shape_to_string(b.shape()) + "^T");
  }
  std::vector<Real> out(m * n, Real(0));
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op_result<Real>({m, n}, std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    // dA = dC * B, dB = dC^T * A
    if (Real* ga = grad_of(pa)) gemm_nn(self.grad.data(), pb->data.data(), ga, m, n, k);
    if (Real* gb = grad_of(pb)) gemm_tn(self.grad.data(), pa->data.data(), gb, m, n, k);
  }, "matmul_nt");
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_op_result<Real>(a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    for (const auto& p : self.parents) {
      if (Real* g = grad_of(p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  }, "add");
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_op_result<Real>(a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    if (Real* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (Real* g = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  }, "sub");
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return make_op_result<Real>(a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (Real* g = grad_of(pa)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb->data[i];
    }
    if (Real* g = grad_of(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa->data[i];
    }
  }, "mul");
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_same_shape(a, b, "div");
  std::vector<Real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) / b.at(i);
  return make_op_result<Real>(a.shape(), std::move(out), {a, b}, [](Node<Real>& self) {
    const auto& pb = self.parents[1];
    if (Real* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / pb->data[i];
    }
    if (Real* g = grad_of(pb)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i] * self.data[i] / pb->data[i];
    }
  }, "div");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.at(i) * factor;
  return make_op_result<Real>(x.shape(), std::move(out), {x}, [factor](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
  }, "scale");
}

template <typename Real>
Tensor<Real> add_row(const Tensor<Real>& x, const Tensor<Real>& row) {
  if (!x.defined() || !row.defined()) throw ValidationError("add_row: undefined tensor");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.size() != n) {
    throw ValidationError("add_row: row of size " + std::to_string(row.size()) + " does not match " +
                          shape_to_string(x.shape()));
  }
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.at(i * n + j) + row.at(j);
  return make_op_result<Real>(x.shape(), std::move(out), {x, row}, [m, n](Node<Real>& self) {
    if (Real* g = grad_of(self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (Real* g = grad_of(self.parents[1])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  }, "add_row");
}

template <typename Real>
Tensor<Real> scale_rows(const Tensor<Real>& x, const Tensor<Real>& s) {
  if (!x.defined() || !s.defined()) throw ValidationError("scale_rows: undefined tensor");
  const std::size_t m = x.rows(), n = x.cols();
  if (s.size() != m) {
    throw ValidationError("scale_rows: " + std::to_string(s.size()) + " scales for " + std::to_string(m) + " rows");
  }
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = s.at(i) * x.at(i * n + j);
  return make_op_result<Real>(x.shape(), std::move(out), {x, s}, [m, n](Node<Real>& self) {
    const auto& px = self.parents[0];
    const auto& ps = self.parents[1];
    if (Real* g = grad_of(px)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j] * ps->data[i];
    }
    if (Real* g = grad_of(ps)) {
      for (std::size_t i = 0; i < m; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j] * px->data[i * n + j];
        g[i] += acc;
      }
    }
  }, "scale_rows");
}

template <typename Real>
Tensor<Real> scale_by(const Tensor<Real>& x, const Tensor<Real>& s) {
  if (!x.defined() || !s.defined()) throw ValidationError("scale_by: undefined tensor");
  if (s.size() != 1) throw ValidationError("scale_by: scale must have one element");
  const Real sv = s.at(0);
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x.at(i);
  return make_op_result<Real>(x.shape(), std::move(out), {x, s}, [](Node<Real>& self) {
    const auto& px = self.parents[0];
    const auto& ps = self.parents[1];
    if (Real* g = grad_of(px)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * ps->data[0];
    }
    if (Real* g = grad_of(ps)) {
      Real acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px->data[i];
      g[0] += acc;
    }
  }, "scale_by");
}

template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x.at(i);
    out[i] = v / (Real(1) + std::exp(-v));
  }
  return make_op_result<Real>(x.shape(), std::move(out), {x}, [](Node<Real>& self) {
    const auto& px = self.parents[0];
    Real* g = grad_of(px);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const Real v = px->data[i];
      const Real sig = Real(1) / (Real(1) + std::exp(-v));
      g[i] += self.grad[i] * sig * (Real(1) + v * (Real(1) - sig));
    }
  }, "silu");
}

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x, Real temperature, bool causal) {
  if (!x.defined()) throw ValidationError("softmax: undefined tensor");
  if (!(temperature > Real(0))) throw ValidationError("softmax: temperature must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  if (causal && m != n) throw ValidationError("softmax: causal mask needs a square score matrix");
  const Real inv_t = Real(1) / temperature;
  std::vector<Real> out(x.size(), Real(0));
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? i + 1 : n;
    const Real* row = x.data().data() + i * n;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, row[j]);
    Real total = 0;
    for (std::size_t j = 0; j < width; ++j) {
      out[i * n + j] = std::exp((row[j] - mx) * inv_t);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[i * n + j] /= total;
  }
  return make_op_result<Real>(x.shape(), std::move(out), {x}, [m, n, inv_t](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < m; ++i) {
      const Real* y = self.data.data() + i * n;
      const Real* dy = self.grad.data() + i * n;
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += inv_t * y[j] * (dy[j] - dot);
    }
  }, "softmax");
}

template <typename Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& x) {
  if (!x.defined()) throw ValidationError("log_softmax: undefined tensor");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = x.data().data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - mx);
    const Real lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_op_result<Real>(x.shape(), std::move(out), {x}, [m, n](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < m; ++i) {
      const Real* y = self.data.data() + i * n;
      const Real* dy = self.grad.data() + i * n;
      Real total = 0;
      for (std::size_t j = 0; j < n; ++j) total += dy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dy[j] - std::exp(y[j]) * total;
    }
  }, "log_softmax");
}

template <typename Real>
Tensor<Real> softmax_temperature(const Tensor<Real>& logits, Real temperature) {
  if (!(temperature > Real(0))) throw ValidationError("softmax_temperature: temperature must be positive");
  if (!logits.defined()) throw ValidationError("softmax_temperature: empty logit vector");
  return softmax_rows(logits, temperature, false);
}

template <typename Real>
Tensor<Real> layer_norm_rows(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta, Real eps) {
  if (!x.defined() || !gamma.defined() || !beta.defined()) throw ValidationError("layer_norm: undefined tensor");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) throw ValidationError("layer_norm: affine size mismatch");
  std::vector<Real> out(x.size());
  auto xhat = std::make_shared<std::vector<Real>>(x.size());
  auto rstd = std::make_shared<std::vector<Real>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = x.data().data() + i * n;
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= Real(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= Real(n);
    const Real r = Real(1) / std::sqrt(var + eps);
    (*rstd)[i] = r;
    for (std::size_t j = 0; j < n; ++j) {
      const Real h = (row[j] - mu) * r;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = h * gamma.at(j) + beta.at(j);
    }
  }
  return make_op_result<Real>(x.shape(), std::move(out), {x, gamma, beta}, [m, n, xhat, rstd](Node<Real>& self) {
    const auto& pg = self.parents[1];
    if (Real* gx = grad_of(self.parents[0])) {
      std::vector<Real> dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        Real mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < n; ++j) {
          dxhat[j] = self.grad[i * n + j] * pg->data[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * (*xhat)[i * n + j];
        }
        mean_d /= Real(n);
        mean_dx /= Real(n);
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += (*rstd)[i] * (dxhat[j] - mean_d - (*xhat)[i * n + j] * mean_dx);
      }
    }
    if (Real* gg = grad_of(pg)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += self.grad[i * n + j] * (*xhat)[i * n + j];
    }
    if (Real* gb = grad_of(self.parents[2])) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
    }
  }, "layer_norm");
}

template <typename Real>
Tensor<Real> mean_pool_time(const Tensor<Real>& x) {
  require_rank2(x, "mean_pool_time");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  std::vector<Real> out(n, Real(0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x.at(i * n + j);
  for (Real& v : out) v /= Real(m);
  return make_op_result<Real>({1, n}, std::move(out), {x}, [m, n](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    const Real inv = Real(1) / Real(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] * inv;
  }, "mean_pool_time");
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (count == 0 || start + count > n) throw ValidationError("slice_cols: column range out of bounds");
  std::vector<Real> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.at(i * n + start + j);
  return make_op_result<Real>({m, count}, std::move(out), {x}, [m, n, start, count](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  }, "slice_cols");
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols: nothing to concatenate");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.shape()[0] != m) throw ValidationError("concat_cols: row count mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<Real> out(m * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[p]; ++j) out[i * total + offset + j] = parts[p].at(i * widths[p] + j);
    offset += widths[p];
  }
  return make_op_result<Real>({m, total}, std::move(out), parts, [m, total, widths](Node<Real>& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (Real* g = grad_of(self.parents[p])) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j) g[i * widths[p] + j] += self.grad[i * total + off + j];
      }
      off += widths[p];
    }
  }, "concat_cols");
}

template <typename Real>
Tensor<Real> gather_rows(const Tensor<Real>& x, std::span<const std::size_t> rows) {
  require_rank2(x, "gather_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (rows.empty()) throw ValidationError("gather_rows: empty row selection");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<Real> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m) throw ValidationError("gather_rows: row index out of range");
    std::copy_n(x.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  const std::size_t count = idx.size();
  return make_op_result<Real>({count, n}, std::move(out), {x}, [idx, n](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
  }, "gather_rows");
}

template <typename Real>
Tensor<Real> scatter_rows(const std::vector<Tensor<Real>>& parts, const std::vector<std::vector<std::size_t>>& index,
                          std::size_t total_rows) {
  if (parts.empty() || parts.size() != index.size()) throw ValidationError("scatter_rows: parts/index mismatch");
  const std::size_t n = parts[0].cols();
  std::vector<Real> out(total_rows * n, Real(0));
  for (std::size_t p = 0; p < parts.size(); ++p) {
    require_rank2(parts[p], "scatter_rows");
    if (parts[p].cols() != n || parts[p].rows() != index[p].size())
      throw ValidationError("scatter_rows: part shape does not match its index");
    for (std::size_t r = 0; r < index[p].size(); ++r) {
      if (index[p][r] >= total_rows) throw ValidationError("scatter_rows: row index out of range");
      std::copy_n(parts[p].data().data() + r * n, n, out.data() + index[p][r] * n);
    }
  }
  return make_op_result<Real>({total_rows, n}, std::move(out), parts, [index, n](Node<Real>& self) {
    for (std::size_t p = 0; p < index.size(); ++p) {
      if (Real* g = grad_of(self.parents[p])) {
        for (std::size_t r = 0; r < index[p].size(); ++r)
          for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[index[p][r] * n + j];
      }
    }
  }, "scatter_rows");
}

template <typename Real>
Tensor<Real> column(const Tensor<Real>& x, std::size_t j) {
  require_rank2(x, "column");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (j >= n) throw ValidationError("column: index out of range");
  std::vector<Real> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = x.at(i * n + j);
  return make_op_result<Real>({m}, std::move(out), {x}, [m, n, j](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t i = 0; i < m; ++i) g[i * n + j] += self.grad[i];
  }, "column");
}

template <typename Real>
Tensor<Real> element(const Tensor<Real>& x, std::size_t i) {
  if (!x.defined() || i >= x.size()) throw ValidationError("element: index out of range");
  return make_op_result<Real>({1}, {x.at(i)}, {x}, [i](Node<Real>& self) {
    grad_of(self.parents[0])[i] += self.grad[0];
  }, "element");
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_op_result<Real>({1}, {total}, {x}, [](Node<Real>& self) {
    auto& p = self.parents[0];
    Real* g = grad_of(p);
    for (std::size_t i = 0; i < p->data.size(); ++i) g[i] += self.grad[0];
  }, "sum");
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / Real(x.size()));
}

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids) {
  require_rank2(table, "embedding");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw ValidationError("embedding: empty id sequence");
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<Real> out(idv.size() * d);
  for (std::size_t r = 0; r < idv.size(); ++r) {
    if (idv[r] < 0 || static_cast<std::size_t>(idv[r]) >= v)
      throw ValidationError("embedding: id " + std::to_string(idv[r]) + " out of range");
    std::copy_n(table.data().data() + static_cast<std::size_t>(idv[r]) * d, d, out.data() + r * d);
  }
  const std::size_t len = idv.size();
  return make_op_result<Real>({len, d}, std::move(out), {table}, [idv, d](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idv[r]) * d + j] += self.grad[r * d + j];
  }, "embedding");
}

template <typename Real>
Tensor<Real> cross_entropy_rows(const Tensor<Real>& logits, std::span<const int> targets) {
  if (!logits.defined()) throw ValidationError("cross_entropy: undefined logits");
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) throw ValidationError("cross_entropy: one target per row required");
  std::vector<int> tv(targets.begin(), targets.end());
  auto probs = std::make_shared<std::vector<Real>>(logits.size());
  Real loss = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (tv[i] < 0 || static_cast<std::size_t>(tv[i]) >= n)
      throw ValidationError("cross_entropy: target " + std::to_string(tv[i]) + " out of range");
    const Real* row = logits.data().data() + i * n;
    const Real mx = *std::max_element(row, row + n);
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      (*probs)[i * n + j] = std::exp(row[j] - mx);
      total += (*probs)[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) (*probs)[i * n + j] /= total;
    loss += (mx + std::log(total)) - row[tv[i]];
  }
  loss /= Real(m);
  return make_op_result<Real>({1}, {loss}, {logits}, [m, n, tv, probs](Node<Real>& self) {
    Real* g = grad_of(self.parents[0]);
    const Real s = self.grad[0] / Real(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += s * (*probs)[i * n + j];
      g[i * n + static_cast<std::size_t>(tv[i])] -= s;
    }
  }, "cross_entropy");
}

#define COMOE_INSTANTIATE(Real)                                                                                     \
  template class Tensor<Real>;                                                                                      \
  template void backward(const Tensor<Real>&);                                                                      \
  template Tensor<Real> detach(const Tensor<Real>&);                                                                \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                                           \
  template Tensor<Real> matmul_nt(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                              \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                              \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                              \
  template Tensor<Real> div(const Tensor<Real>&, const Tensor<Real>&);                                              \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                                           \
  template Tensor<Real> add_row(const Tensor<Real>&, const Tensor<Real>&);                                          \
  template Tensor<Real> scale_rows(const Tensor<Real>&, const Tensor<Real>&);                                       \
  template Tensor<Real> scale_by(const Tensor<Real>&, const Tensor<Real>&);                                         \
  template Tensor<Real> silu(const Tensor<Real>&);                                                                  \
  template Tensor<Real> softmax_rows(const Tensor<Real>&, Real, bool);                                              \
  template Tensor<Real> log_softmax_rows(const Tensor<Real>&);                                                      \
  template Tensor<Real> softmax_temperature(const Tensor<Real>&, Real);                                             \
  template Tensor<Real> layer_norm_rows(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&, Real);       \
  template Tensor<Real> mean_pool_time(const Tensor<Real>&);                                                        \
  template Tensor<Real> slice_cols(const Tensor<Real>&, std::size_t, std::size_t);                                  \
  template Tensor<Real> concat_cols(const std::vector<Tensor<Real>>&);                                              \
  template Tensor<Real> gather_rows(const Tensor<Real>&, std::span<const std::size_t>);                             \
  template Tensor<Real> scatter_rows(const std::vector<Tensor<Real>>&, const std::vector<std::vector<std::size_t>>&, \
                                     std::size_t);                                                                  \
  template Tensor<Real> column(const Tensor<Real>&, std::size_t);                                                   \
  template Tensor<Real> element(const Tensor<Real>&, std::size_t);                                                  \
  template Tensor<Real> sum(const Tensor<Real>&);                                                                   \
  template Tensor<Real> mean(const Tensor<Real>&);                                                                  \
  template Tensor<Real> embedding(const Tensor<Real>&, std::span<const int>);                                       \
  template Tensor<Real> cross_entropy_rows(const Tensor<Real>&, std::span<const int>);                              \
  template Tensor<Real> make_op_result(Shape, std::vector<Real>, std::vector<Tensor<Real>>,                         \
                                       std::function<void(Node<Real>&)>, const char*);

COMOE_INSTANTIATE(float)
COMOE_INSTANTIATE(double)
// Reference precision for finite-difference gradient checks.
COMOE_INSTANTIATE(long double)

#undef COMOE_INSTANTIATE

}  // namespace comoe
