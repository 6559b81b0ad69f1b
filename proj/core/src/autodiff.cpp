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

#include "mmtlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "mmtlab/error.hpp"
#include "mmtlab/kernels.hpp"
#include "mmtlab/rng.hpp"

namespace mmt::ad {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                   [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) throw Error(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void backward(const Var& loss) {
  if (!loss.defined()) throw Error("backward on an undefined variable");
  if (loss.value().size() != 1) {
    throw Error("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // iterative post-order DFS gives a topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  // interior gradients are transient; leaves keep theirs
  for (Node* node : order) {
    if (node->backward) node->grad = Tensor();
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= factor;
  return make_result(std::move(out), {a.node()}, [factor](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().storage()) total += v;
  return make_result(Tensor::scalar(total), {a.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double s = self.grad[0];
    for (double& v : g.storage()) v += s;
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    const auto& p = self.parents[0];
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p->value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  if (b.value().rows() != k) {
    throw Error("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n, false);
  return make_result(std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      kernels::gemm_nt(self.grad.data(), pb->value.data(), pa->grad_buffer().data(), m, n, k, true);
    }
    if (pb->requires_grad) {
      kernels::gemm_tn(pa->value.data(), self.grad.data(), pb->grad_buffer().data(), m, k, n, true);
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_matrix(x, "add_bias");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (bias.value().size() != n) throw Error("add_bias: bias length does not match columns");
  Tensor out = x.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) += bias.value()[c];
  return make_result(std::move(out), {x.node(), bias.node()}, [m, n](Node& self) {
    const auto& px = self.parents[0];
    const auto& pb = self.parents[1];
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

Var add_group_rows(const Var& x, const Var& y, std::size_t group_len) {
  require_matrix(x, "add_group_rows");
  require_matrix(y, "add_group_rows");
  const std::size_t n = x.value().cols();
  const std::size_t groups = y.value().rows();
  if (y.value().cols() != n || groups * group_len != x.value().rows()) {
    throw Error("add_group_rows: " + shape_string(x.shape()) + " cannot take groups of " + shape_string(y.shape()));
  }
  Tensor out = x.value();
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t r = 0; r < group_len; ++r)
      for (std::size_t c = 0; c < n; ++c) out((gi * group_len) + r, c) += y.value()(gi, c);
  return make_result(std::move(out), {x.node(), y.node()}, [groups, group_len, n](Node& self) {
    const auto& px = self.parents[0];
    const auto& py = self.parents[1];
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (py->requires_grad) {
      auto& g = py->grad_buffer();
      for (std::size_t gi = 0; gi < groups; ++gi)
        for (std::size_t r = 0; r < group_len; ++r)
          for (std::size_t c = 0; c < n; ++c) g(gi, c) += self.grad((gi * group_len) + r, c);
    }
  });
}

Var add_constant(const Var& x, const Tensor& c) {
  if (x.shape() != c.shape()) throw Error("add_constant: shape mismatch");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  return make_result(std::move(out), {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Var softmax_rows(const Var& x) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    auto probs = softmax(x.value().row(r));
    std::copy(probs.begin(), probs.end(), out.row(r).begin());
  }
  return make_result(std::move(out), {x.node()}, [m, n](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += self.grad(r, c) * self.value(r, c);
      for (std::size_t c = 0; c < n; ++c) g(r, c) += self.value(r, c) * (self.grad(r, c) - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw Error("layer_norm: gain/bias length " + std::to_string(gain.value().size()) + "/" +
                std::to_string(bias.value().size()) + " does not match width " + std::to_string(n));
  }
  if (!(eps > 0.0)) throw Error("layer_norm eps must be positive");
  Tensor out(x.shape());
  // cache normalized input and inverse std per row for the backward pass
  auto xhat = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const double dn = static_cast<double>(n);
  for (std::size_t r = 0; r < m; ++r) {
    auto row = x.value().row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= dn;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= dn;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * inv;
      (*xhat)(r, c) = h;
      out(r, c) = gain.value()[c] * h + bias.value()[c];
    }
  }
  return make_result(std::move(out), {x.node(), gain.node(), bias.node()}, [m, n, xhat, inv_std](Node& self) {
    const auto& px = self.parents[0];
    const auto& pg = self.parents[1];
    const auto& pb = self.parents[2];
    if (pg->requires_grad) {
      auto& g = pg->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad(r, c) * (*xhat)(r, c);
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad(r, c);
    }
    if (px->requires_grad) {
      auto& g = px->grad_buffer();
      const double dn = static_cast<double>(n);
      for (std::size_t r = 0; r < m; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double d = self.grad(r, c) * pg->value[c];
          mean_d += d;
          mean_dx += d * (*xhat)(r, c);
        }
        mean_d /= dn;
        mean_dx /= dn;
        for (std::size_t c = 0; c < n; ++c) {
          const double d = self.grad(r, c) * pg->value[c];
          g(r, c) += (*inv_std)[r] * (d - mean_d - (*xhat)(r, c) * mean_dx);
        }
      }
    }
  });
}

Var dropout(const Var& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    out[i] *= (*mask)[i];
  }
  return make_result(std::move(out), {x.node()}, [mask](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
  });
}

Var embedding(const Var& table, const std::vector<int>& ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.value().rows(), d = table.value().cols();
  if (ids.empty()) throw Error("embedding lookup with no ids");
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error("embedding id " + std::to_string(ids[i]) + " outside vocabulary of " + std::to_string(vocab));
    }
    auto src = table.value().row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return make_result(std::move(out), {table.node()}, [ids, d](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = g.data() + static_cast<std::size_t>(ids[i]) * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += self.grad(i, c);
    }
  });
}

Var cross_entropy(const Var& logits, const std::vector<int>& targets, int ignore_index) {
  require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.value().rows(), v = logits.value().cols();
  if (targets.size() != m) throw Error("cross_entropy: one target per logit row required");
  auto probs = std::make_shared<Tensor>(logits.shape());
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] == ignore_index) continue;
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v) {
      throw Error("cross_entropy target " + std::to_string(targets[r]) + " out of range for " + std::to_string(v) +
                  " classes");
    }
    auto lsm = log_softmax(logits.value().row(r));
    total -= lsm[static_cast<std::size_t>(targets[r])];
    for (std::size_t c = 0; c < v; ++c) (*probs)(r, c) = std::exp(lsm[c]);
    ++counted;
  }
  if (counted == 0) throw Error("cross_entropy: every target is ignored");
  const double denom = static_cast<double>(counted);
  return make_result(Tensor::scalar(total / denom), {logits.node()}, [probs, targets, ignore_index, m, v, denom](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    const double s = self.grad[0] / denom;
    for (std::size_t r = 0; r < m; ++r) {
      if (targets[r] == ignore_index) continue;
      for (std::size_t c = 0; c < v; ++c) g(r, c) += s * (*probs)(r, c);
      g(r, static_cast<std::size_t>(targets[r])) -= s;
    }
  });
}

AttentionOutput attention(const Var& queries, const Var& keys, const Var& values, const AttentionLayout& layout) {
  require_matrix(queries, "attention");
  require_matrix(keys, "attention");
  require_matrix(values, "attention");
  const std::size_t B = layout.batch, Lq = layout.q_len, Lk = layout.k_len, H = layout.heads;
  const std::size_t d = queries.value().cols(), dv = values.value().cols();
  if (H == 0 || d % H != 0 || dv % H != 0) throw Error("attention: width not divisible by head count");
  if (queries.value().rows() != B * Lq) throw Error("attention: query rows do not match batch*q_len");
  if (keys.value().rows() != B * Lk || values.value().rows() != B * Lk) {
    throw Error("attention: key/value rows do not match batch*k_len");
  }
  if (keys.value().cols() != d) throw Error("attention: query/key widths differ");
  if (!layout.key_valid.empty() && layout.key_valid.size() != B * Lk) throw Error("attention: key_valid size");
  if (!layout.allow.empty() && layout.allow.size() != B * Lq * Lk) throw Error("attention: allow mask size");

  const std::size_t dk = d / H, dvh = dv / H;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dk));
  auto weights = std::make_shared<Tensor>(Tensor::Shape{B, H, Lq, Lk});
  auto allowed = [&layout, Lq, Lk](std::size_t b, std::size_t i, std::size_t j) {
    if (!layout.key_valid.empty() && !layout.key_valid[b * Lk + j]) return false;
    if (layout.causal && j > i) return false;
    if (!layout.allow.empty() && !layout.allow[(b * Lq + i) * Lk + j]) return false;
    return true;
  };

  const Tensor& Q = queries.value();
  const Tensor& K = keys.value();
  const Tensor& V = values.value();
  Tensor out({B * Lq, dv});
  std::vector<double> scores(Lk);
  std::vector<std::uint8_t> ok(Lk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Lq; ++i) {
        const double* q = Q.data() + (b * Lq + i) * d + h * dk;
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < Lk; ++j) {
          ok[j] = allowed(b, i, j);
          if (!ok[j]) continue;
          const double* k = K.data() + (b * Lk + j) * d + h * dk;
          double s = 0.0;
          for (std::size_t c = 0; c < dk; ++c) s += q[c] * k[c];
          scores[j] = s * scl;
          mx = std::max(mx, scores[j]);
          any = true;
        }
        if (!any) {
          throw Error("attention: query " + std::to_string(i) + " of batch item " + std::to_string(b) +
                      " has every key forbidden");
        }
        double* w = weights->data() + ((b * H + h) * Lq + i) * Lk;
        double total = 0.0;
        for (std::size_t j = 0; j < Lk; ++j) {
          w[j] = ok[j] ? std::exp(scores[j] - mx) : 0.0;
          total += w[j];
        }
        double* o = out.data() + (b * Lq + i) * dv + h * dvh;
        for (std::size_t j = 0; j < Lk; ++j) {
          w[j] /= total;
          if (w[j] == 0.0) continue;
          const double* v = V.data() + (b * Lk + j) * dv + h * dvh;
          for (std::size_t c = 0; c < dvh; ++c) o[c] += w[j] * v[c];
        }
      }
    }
  }

  auto result = make_result(std::move(out), {queries.node(), keys.node(), values.node()},
                            [weights, B, H, Lq, Lk, d, dv, dk, dvh, scl](Node& self) {
    const auto& pq = self.parents[0];
    const auto& pk = self.parents[1];
    const auto& pv = self.parents[2];
    const Tensor& Q = pq->value;
    const Tensor& K = pk->value;
    const Tensor& V = pv->value;
    Tensor* gq = pq->requires_grad ? &pq->grad_buffer() : nullptr;
    Tensor* gk = pk->requires_grad ? &pk->grad_buffer() : nullptr;
    Tensor* gv = pv->requires_grad ? &pv->grad_buffer() : nullptr;
    std::vector<double> dp(Lk);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < Lq; ++i) {
          const double* w = weights->data() + ((b * H + h) * Lq + i) * Lk;
          const double* go = self.grad.data() + (b * Lq + i) * dv + h * dvh;
          double dot = 0.0;
          for (std::size_t j = 0; j < Lk; ++j) {
            if (w[j] == 0.0) {
              dp[j] = 0.0;
              continue;
            }
            const double* v = V.data() + (b * Lk + j) * dv + h * dvh;
            double s = 0.0;
            for (std::size_t c = 0; c < dvh; ++c) s += go[c] * v[c];
            dp[j] = s;
            dot += w[j] * s;
            if (gv) {
              double* dvv = gv->data() + (b * Lk + j) * dv + h * dvh;
              for (std::size_t c = 0; c < dvh; ++c) dvv[c] += w[j] * go[c];
            }
          }
          const double* q = Q.data() + (b * Lq + i) * d + h * dk;
          double* dq = gq ? gq->data() + (b * Lq + i) * d + h * dk : nullptr;
          for (std::size_t j = 0; j < Lk; ++j) {
            if (w[j] == 0.0) continue;
            const double ds = w[j] * (dp[j] - dot) * scl;
            const double* k = K.data() + (b * Lk + j) * d + h * dk;
            if (dq)
              for (std::size_t c = 0; c < dk; ++c) dq[c] += ds * k[c];
            if (gk) {
              double* dkk = gk->data() + (b * Lk + j) * d + h * dk;
              for (std::size_t c = 0; c < dk; ++c) dkk[c] += ds * q[c];
            }
          }
        }
      }
    }
  });
  return {std::move(result), std::move(weights)};
}

}  // namespace mmt::ad
