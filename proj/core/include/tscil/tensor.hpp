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

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tscil {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

// One vertex of the reverse-mode tape. Leaves have no parents and no
// backward function. Only nodes that require a gradient are linked into
// the tape, so frozen tensors are never written during backpropagation.
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Dense row-major f32 tensor with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same buffer. Use clone()
/// for an independent copy. Operations build the tape on the fly; the
/// graph lives as long as the result tensor does.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values,
                     bool requires_grad = false);
  static Tensor scalar(float value);
  static Tensor identity(std::size_t n, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> data() const;
  /// Writable view of a leaf's storage. Throws for non-leaf tensors.
  std::span<float> mutable_data();

  float item() const;
  float operator()(std::size_t i) const;
  float operator()(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  /// Deep copy; keeps requires_grad but drops graph history.
  Tensor clone() const;
  /// Deep copy without gradient tracking.
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

bool bit_equal(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Differentiable operations. All of them accept tracked and untracked
// operands; the result tracks gradients iff any operand does.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
/// a[m x n] + bias[n] broadcast over rows.
Tensor add_row_vector(const Tensor& a, const Tensor& bias);
Tensor relu(const Tensor& a);
/// tanh-approximated GELU.
Tensor gelu(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean over consecutive groups of `group` rows: [B*group x D] -> [B x D].
Tensor group_mean(const Tensor& a, std::size_t group);
/// Divides each row by its L2 norm. Zero rows are a contract error.
Tensor normalize_rows(const Tensor& a);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor select_cols(const Tensor& a, std::span<const std::size_t> cols);
/// Mean over rows of ||a_i - b_i||^2.
Tensor mean_squared_distance(const Tensor& a, const Tensor& b);
/// Mean softmax cross-entropy of logits[m x k] against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

/// Reverse-mode gradients of a one-element loss with respect to params.
/// Params the loss does not depend on receive zero gradients.
std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> params);

}  // namespace tscil
