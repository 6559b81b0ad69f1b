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

#include "mmtlab/bpe.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/rng.hpp"

namespace {

std::vector<std::vector<std::string>> word_corpus(std::size_t n) {
  mmt::Rng rng(4);
  const std::string letters = "abcdefghijklmnopqrst";
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> s;
    for (std::size_t k = 0, len = 5 + rng.below(15); k < len; ++k) {
      std::string w;
      for (std::size_t j = 0, wl = 1 + rng.below(8); j < wl; ++j) w += letters[rng.below(letters.size())];
      s.push_back(w);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> joined(const std::vector<std::vector<std::string>>& corpus) {
  std::vector<std::string> out;
  for (const auto& s : corpus) {
    std::string line;
    for (const auto& w : s) line += (line.empty() ? "" : " ") + w;
    out.push_back(line);
  }
  return out;
}

void BM_BleuCorpus(benchmark::State& state) {
  const auto refs = joined(word_corpus(static_cast<std::size_t>(state.range(0))));
  auto hyps = refs;
  for (std::size_t i = 0; i < hyps.size(); i += 2) hyps[i] = refs[(i + 1) % refs.size()];
  for (auto _ : state) benchmark::DoNotOptimize(mmt::eval::bleu(hyps, refs));
}
BENCHMARK(BM_BleuCorpus)->Arg(1000)->Arg(10000);

void BM_BpeLearn(benchmark::State& state) {
  const auto corpus = word_corpus(2000);
  for (auto _ : state)
    benchmark::DoNotOptimize(mmt::bpe::learn_merges(corpus, static_cast<std::size_t>(state.range(0))).vocab_size());
}
BENCHMARK(BM_BpeLearn)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_BpeApply(benchmark::State& state) {
  const auto corpus = word_corpus(2000);
  const auto model = mmt::bpe::learn_merges(corpus, 500);
  for (auto _ : state)
    for (const auto& s : corpus) benchmark::DoNotOptimize(model.encode(s).size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}
BENCHMARK(BM_BpeApply)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
