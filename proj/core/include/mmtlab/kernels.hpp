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

// Plain numerical kernels shared by the autodiff ops and by callers that only
// need values (inference, feature construction, tests).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmtlab/tensor.hpp"

namespace mmt {

/// Shift-stable softmax. Throws on empty or NaN input.
std::vector<double> softmax(std::span<const double> logits);

/// log(softmax(logits)) computed with the log-sum-exp shift.
std::vector<double> log_softmax(std::span<const double> logits);

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps);

/// -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, std::size_t target);

/// Row-by-column allow mask for attention; 1 = allow, 0 = forbid.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> allow;

  static AttentionMask causal(std::size_t n);
  bool allowed(std::size_t r, std::size_t c) const { return allow[r * cols + c] != 0; }
};

struct AttentionResult {
  Tensor output;   // L_q x d_v
  Tensor weights;  // L_q x L_k
};

/// Single-head scaled dot-product attention with 1/sqrt(d) scaling.
AttentionResult scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                     const std::optional<AttentionMask>& mask = std::nullopt);

namespace kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);
// C[k x n] (+)= A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

}  // namespace kernels

}  // namespace mmt
