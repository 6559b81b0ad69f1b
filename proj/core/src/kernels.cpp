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

#include "mmtlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mmtlab/error.hpp"

namespace mmt {

namespace {

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax of an empty vector");
  for (double v : logits) {
    if (std::isnan(v)) throw Error("softmax input contains NaN");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  check_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  check_logits(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gain,
                               std::span<const double> bias, double eps) {
  if (x.size() != gain.size() || x.size() != bias.size()) {
    throw Error("layer_norm length mismatch: x=" + std::to_string(x.size()) +
                " gain=" + std::to_string(gain.size()) + " bias=" + std::to_string(bias.size()));
  }
  if (!(eps > 0.0)) throw Error("layer_norm eps must be positive");
  if (x.empty()) return {};
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) * inv + bias[i];
  return out;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw Error("cross_entropy target " + std::to_string(target) + " out of range for " +
                std::to_string(logits.size()) + " classes");
  }
  return -log_softmax(logits)[target];
}

AttentionMask AttentionMask::causal(std::size_t n) {
  AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c <= r; ++c) m.allow[r * n + c] = 1;
  return m;
}

AttentionResult scaled_dot_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                                     const std::optional<AttentionMask>& mask) {
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2) {
    throw Error("scaled_dot_attention expects matrices");
  }
  const std::size_t lq = queries.rows(), lk = keys.rows(), d = queries.cols(), dv = values.cols();
  if (keys.cols() != d) throw Error("attention query/key dimensions differ");
  if (values.rows() != lk) throw Error("attention key/value row counts differ");
  if (mask && (mask->rows != lq || mask->cols != lk || mask->allow.size() != lq * lk)) {
    throw Error("attention mask shape does not match L_q x L_k");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor weights({lq, lk});
  Tensor output({lq, dv});
  std::vector<double> scores(lk);
  for (std::size_t i = 0; i < lq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < lk; ++j) {
      if (mask && !mask->allowed(i, j)) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += queries(i, c) * keys(j, c);
      scores[j] = s * scale;
      mx = std::max(mx, scores[j]);
      any = true;
    }
    if (!any) throw Error("attention row " + std::to_string(i) + " has every key forbidden");
    double total = 0.0;
    for (std::size_t j = 0; j < lk; ++j) {
      if (mask && !mask->allowed(i, j)) continue;
      weights(i, j) = std::exp(scores[j] - mx);
      total += weights(i, j);
    }
    for (std::size_t j = 0; j < lk; ++j) {
      const double w = weights(i, j) / total;
      weights(i, j) = w;
      if (w == 0.0) continue;
      for (std::size_t c = 0; c < dv; ++c) output(i, c) += w * values(j, c);
    }
  }
  return {std::move(output), std::move(weights)};
}

namespace kernels {

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      if (accumulate)
        c[i * n + j] += s;
      else
        c[i * n + j] = s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace kernels

}  // namespace mmt
