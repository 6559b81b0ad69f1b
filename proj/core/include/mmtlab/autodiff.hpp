/* Copyright (c) 2026 The mmtlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// Every op builds a Node holding its value and, when any input requires a
// gradient, a closure that pushes the node's gradient into its inputs.
// backward() walks the graph in reverse topological order from a scalar.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mmtlab/tensor.hpp"

namespace mmt::ad {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  /// Mutable access for optimizers and tests; not for use inside a live graph.
  Tensor& mutable_value() { return node_->value; }
  const Tensor::Shape& shape() const { return node_->value.shape(); }

  /// Gradient after backward(); a zero tensor when nothing reached this node.
  Tensor grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that never receives a gradient.
Var constant(Tensor value);
/// Leaf that accumulates gradients.
Var parameter(Tensor value);

/// Propagates d(loss)/d(.) into every reachable leaf with requires_grad.
/// Leaf gradients accumulate across calls; clear them with Var::zero_grad().
void backward(const Var& loss);

/// While alive on this thread, new nodes record no backward closures.
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

// Elementwise and linear ops.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var relu(const Var& a);
Var matmul(const Var& a, const Var& b);
/// x[m x n] + b[n] broadcast over rows.
Var add_bias(const Var& x, const Var& bias);
/// x[(groups*group_len) x n] + y[groups x n]: row r of y is added to every row of group r.
Var add_group_rows(const Var& x, const Var& y, std::size_t group_len);
/// Adds a constant tensor of the same shape (no gradient to it).
Var add_constant(const Var& x, const Tensor& c);

/// Row-wise softmax.
Var softmax_rows(const Var& x);
/// Row-wise layer normalization with per-column gain and bias.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-6);
/// Inverted dropout; identity when rate == 0. The mask is a pure function of seed.
Var dropout(const Var& x, double rate, std::uint64_t seed);
/// Gathers rows of table[V x d] by id.
Var embedding(const Var& table, const std::vector<int>& ids);
/// Mean token cross-entropy over rows whose target is not ignore_index.
Var cross_entropy(const Var& logits, const std::vector<int>& targets, int ignore_index = -1);

/// Batched multi-head attention geometry. Queries hold batch*q_len rows,
/// keys and values batch*k_len rows; heads split the columns evenly.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t q_len = 0;
  std::size_t k_len = 0;
  std::size_t heads = 1;
  bool causal = false;
  /// batch*k_len flags; empty means every key is valid.
  std::vector<std::uint8_t> key_valid;
  /// Optional batch*q_len*k_len allow mask on top of the above.
  std::vector<std::uint8_t> allow;
};

struct AttentionOutput {
  Var output;
  /// batch x heads x q_len x k_len attention weights.
  std::shared_ptr<const Tensor> weights;
};

/// Multi-head scaled dot-product attention (no projections).
AttentionOutput attention(const Var& queries, const Var& keys, const Var& values, const AttentionLayout& layout);

}  // namespace mmt::ad
