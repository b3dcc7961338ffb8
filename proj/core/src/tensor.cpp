// Copyright 2026 The tscil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tscil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "tscil/error.hpp"

namespace tscil {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

NodePtr make_leaf(Shape shape, std::vector<float> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

// Creates an op result. Operands that do not track gradients are left out of
// the parent list; the backward closure captures whatever it needs directly.
Tensor make_result(Shape shape, std::vector<float> values,
                   std::initializer_list<const Tensor*> operands,
                   std::function<void(Node&)> backward) {
  auto n = make_leaf(std::move(shape), std::move(values), false);
  for (const Tensor* t : operands) {
    if (t->requires_grad()) n->parents.push_back(t->node());
  }
  if (!n->parents.empty()) {
    n->requires_grad = true;
    n->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

Tensor make_result_list(Shape shape, std::vector<float> values,
                        std::span<const Tensor> operands,
                        std::function<void(Node&)> backward) {
  auto n = make_leaf(std::move(shape), std::move(values), false);
  for (const Tensor& t : operands) {
    if (t.requires_grad()) n->parents.push_back(t.node());
  }
  if (!n->parents.empty()) {
    n->requires_grad = true;
    n->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(n));
}

void require_2d(const Tensor& t, const char* op) {
  if (!t.defined() || t.ndim() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " +
                         (t.defined() ? shape_str(t.shape()) : "undefined"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n] with optional transposes on the inputs.
void gemm_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
              std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0f) continue;
      if (trans_b) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return wrap(make_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  return wrap(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

Tensor Tensor::identity(std::size_t n, bool requires_grad) {
  Tensor t = zeros({n, n}, requires_grad);
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 1.0f;
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t i) const {
  const auto& s = shape();
  if (i >= s.size()) throw DimensionError("dim index out of range for " + shape_str(s));
  return s[i];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::size_t Tensor::rows() const { return dim(0); }

std::size_t Tensor::cols() const { return ndim() == 1 ? 1 : dim(1); }

std::span<const float> Tensor::data() const {
  if (!node_) throw ContractError("use of undefined tensor");
  return node_->data;
}

std::span<float> Tensor::mutable_data() {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!node_->parents.empty()) throw ContractError("in-place write to a non-leaf tensor");
  return node_->data;
}

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

float Tensor::operator()(std::size_t i) const { return data()[i]; }

float Tensor::operator()(std::size_t r, std::size_t c) const {
  return data()[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("use of undefined tensor");
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

Tensor Tensor::clone() const {
  return from(shape(), node_->data, node_->requires_grad && is_leaf());
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  const Tensor self = *this;
  return make_result(std::move(new_shape), node_->data, {&self}, [self](Node& out) {
    auto& g = self.node()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto da = a.data();
  auto db = b.data();
  return std::memcmp(da.data(), db.data(), da.size() * sizeof(float)) == 0;
}

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<float> out(m * n, 0.0f);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n, false, false);
  return make_result({m, n}, std::move(out), {&a, &b}, [a, b, m, k, n](Node& res) {
    if (a.requires_grad()) {
      // dA = dC * B^T
      gemm_acc(res.grad.data(), b.data().data(), a.node()->grad.data(), m, n, k, false, true);
    }
    if (b.requires_grad()) {
      // dB = A^T * dC
      gemm_acc(a.data().data(), res.grad.data(), b.node()->grad.data(), k, m, n, true, false);
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<float> out(m * n);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  return make_result({n, m}, std::move(out), {&a}, [a, m, n](Node& res) {
    auto& g = a.node()->grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += res.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](Node& res) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto& g = t->node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](Node& res) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= res.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [a, b](Node& res) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad;
      auto db = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i] * db[i];
    }
    if (b.requires_grad()) {
      auto& g = b.node()->grad;
      auto da = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i] * da[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
  return make_result(a.shape(), std::move(out), {&a}, [a, factor](Node& res) {
    auto& g = a.node()->grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i] * factor;
  });
}

Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  require_2d(a, "add_row_vector");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.numel() != n) {
    throw DimensionError("add_row_vector: bias " + shape_str(bias.shape()) +
                         " does not match rows of " + shape_str(a.shape()));
  }
  std::vector<float> out(m * n);
  auto da = a.data(), db = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = da[i * n + j] + db[j];
  return make_result(a.shape(), std::move(out), {&a, &bias}, [a, bias, m, n](Node& res) {
    if (a.requires_grad()) {
      auto& g = a.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[i];
    }
    if (bias.requires_grad()) {
      auto& g = bias.node()->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += res.grad[i * n + j];
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > 0.0f ? da[i] : 0.0f;
  return make_result(a.shape(), std::move(out), {&a}, [a](Node& res) {
    auto& g = a.node()->grad;
    auto da = a.data();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (da[i] > 0.0f) g[i] += res.grad[i];
  });
}

Tensor gelu(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float x = da[i];
    const float t = std::tanh(kGeluC * (x + 0.044715f * x * x * x));
    out[i] = 0.5f * x * (1.0f + t);
  }
  return make_result(a.shape(), std::move(out), {&a}, [a](Node& res) {
    auto& g = a.node()->grad;
    auto da = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float x = da[i];
      const float t = std::tanh(kGeluC * (x + 0.044715f * x * x * x));
      const float dt = (1.0f - t * t) * kGeluC * (1.0f + 3.0f * 0.044715f * x * x);
      g[i] += res.grad[i] * (0.5f * (1.0f + t) + 0.5f * x * dt);
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return make_result({1}, {static_cast<float>(acc)}, {&a}, [a](Node& res) {
    auto& g = a.node()->grad;
    for (auto& v : g) v += res.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor group_mean(const Tensor& a, std::size_t group) {
  require_2d(a, "group_mean");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (group == 0 || m % group != 0) {
    throw DimensionError("group_mean: " + std::to_string(m) + " rows not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t b = m / group;
  const float inv = 1.0f / static_cast<float>(group);
  std::vector<float> out(b * n, 0.0f);
  auto da = a.data();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) out[(r / group) * n + j] += da[r * n + j];
  for (auto& v : out) v *= inv;
  return make_result({b, n}, std::move(out), {&a}, [a, group, m, n, inv](Node& res) {
    auto& g = a.node()->grad;
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += res.grad[(r / group) * n + j] * inv;
  });
}

Tensor normalize_rows(const Tensor& a) {
  require_2d(a, "normalize_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  auto da = a.data();
  std::vector<float> norms(m);
  std::vector<float> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += double(da[i * n + j]) * da[i * n + j];
    if (!(s > 0.0)) {
      throw ContractError("normalize_rows: row " + std::to_string(i) +
                          " has zero norm (cosine undefined)");
    }
    norms[i] = static_cast<float>(std::sqrt(s));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = da[i * n + j] / norms[i];
  }
  auto y = out;
  return make_result(a.shape(), std::move(out), {&a},
                     [a, m, n, norms = std::move(norms), y = std::move(y)](Node& res) {
                       auto& g = a.node()->grad;
                       // d(x/|x|) = (dy - y <y, dy>) / |x|
                       for (std::size_t i = 0; i < m; ++i) {
                         float dot = 0.0f;
                         for (std::size_t j = 0; j < n; ++j)
                           dot += y[i * n + j] * res.grad[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           g[i * n + j] += (res.grad[i * n + j] - y[i * n + j] * dot) / norms[i];
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    }
    m += p.rows();
  }
  std::vector<float> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> keep(parts.begin(), parts.end());
  return make_result_list({m, n}, std::move(out), parts, [keep](Node& res) {
    std::size_t offset = 0;
    for (const auto& p : keep) {
      if (p.requires_grad()) {
        auto& g = p.node()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += res.grad[offset + i];
      }
      offset += p.numel();
    }
  });
}

Tensor select_cols(const Tensor& a, std::span<const std::size_t> cols) {
  require_2d(a, "select_cols");
  const std::size_t m = a.dim(0), n = a.dim(1), k = cols.size();
  if (k == 0) throw ContractError("select_cols: empty selection");
  for (auto c : cols) {
    if (c >= n) throw DimensionError("select_cols: column " + std::to_string(c) + " out of range");
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  std::vector<float> out(m * k);
  auto da = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = da[i * n + idx[j]];
  return make_result({m, k}, std::move(out), {&a}, [a, idx, m, n, k](Node& res) {
    auto& g = a.node()->grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < k; ++j) g[i * n + idx[j]] += res.grad[i * k + j];
  });
}

Tensor mean_squared_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_squared_distance");
  require_2d(a, "mean_squared_distance");
  const Tensor d = sub(a, b);
  return scale(sum(mul(d, d)), 1.0f / static_cast<float>(a.rows()));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  require_2d(logits, "cross_entropy");
  const std::size_t m = logits.dim(0), k = logits.dim(1);
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
  }
  for (auto t : targets) {
    if (t >= k) {
      throw ContractError("cross_entropy: target " + std::to_string(t) + " outside " +
                          std::to_string(k) + " classes");
    }
  }
  auto d = logits.data();
  std::vector<float> probs(m * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const float* row = d.data() + i * k;
    const float mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(double(row[j]) - mx);
    for (std::size_t j = 0; j < k; ++j)
      probs[i * k + j] = static_cast<float>(std::exp(double(row[j]) - mx) / z);
    loss += -(double(row[targets[i]]) - mx - std::log(z));
  }
  loss /= static_cast<double>(m);
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return make_result({1}, {static_cast<float>(loss)}, {&logits},
                     [logits, m, k, probs = std::move(probs), tg = std::move(tg)](Node& res) {
                       auto& g = logits.node()->grad;
                       const float s = res.grad[0] / static_cast<float>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < k; ++j)
                           g[i * k + j] += s * (probs[i * k + j] - (j == tg[i] ? 1.0f : 0.0f));
                     });
}

// ---------------------------------------------------------------------------
// Backpropagation

std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> params) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("grad: loss must be a one-element tensor, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  std::vector<Tensor> out;
  out.reserve(params.size());

  // Iterative post-order DFS gives a topological order of the tracked graph.
  std::vector<Node*> order;
  if (loss.requires_grad()) {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node* p = node->parents[next++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* n : order) n->grad.assign(n->data.size(), 0.0f);
    loss.node()->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward) (*it)->backward(**it);
    }
  }

  for (const Tensor& p : params) {
    const auto& g = p.node()->grad;
    if (g.size() == p.numel()) {
      out.push_back(Tensor::from(p.shape(), g));
    } else {
      out.push_back(Tensor::zeros(p.shape()));
    }
  }
  for (Node* n : order) {
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
  return out;
}

}  // namespace tscil
