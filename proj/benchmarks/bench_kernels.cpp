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

#include <benchmark/benchmark.h>

#include "mmtlab/autodiff.hpp"
#include "mmtlab/decode.hpp"
#include "mmtlab/kernels.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/rng.hpp"

namespace {

mmt::Tensor random(mmt::Rng& rng, mmt::Tensor::Shape shape) {
  mmt::Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  mmt::Rng rng(1);
  const auto a = random(rng, {n, n}), b = random(rng, {n, n});
  mmt::Tensor c({n, n});
  for (auto _ : state) {
    mmt::kernels::gemm_nn(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

// one AIF visual attention sublayer over conv4-sized memory
void BM_Attention(benchmark::State& state) {
  const auto k_len = static_cast<std::size_t>(state.range(0));
  mmt::Rng rng(2);
  mmt::ad::AttentionLayout layout;
  layout.batch = 8;
  layout.q_len = 20;
  layout.k_len = k_len;
  layout.heads = 4;
  const auto q = mmt::ad::constant(random(rng, {8 * 20, 64}));
  const auto kv = mmt::ad::constant(random(rng, {8 * k_len, 64}));
  mmt::ad::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(mmt::ad::attention(q, kv, kv, layout).output.value().data());
}
BENCHMARK(BM_Attention)->Arg(20)->Arg(49)->Arg(339);

void BM_BeamSearch(benchmark::State& state) {
  mmt::model::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.model_dim = 64;
  c.ff_dim = 128;
  c.max_len = 40;
  c.src_vocab = c.tgt_vocab = 500;
  const mmt::model::Transformer m(c, mmt::model::init_params(c, 3));
  const std::vector<int> source{10, 20, 30, 40, 50, 60, 70, 80, 2};
  const mmt::decode::DecodeOptions opt{static_cast<std::size_t>(state.range(0)), 1.0, 30, 1};
  for (auto _ : state) benchmark::DoNotOptimize(mmt::decode::beam_search(m, source, nullptr, opt).score);
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
