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

// Beam search with the GNMT length penalty ((5 + len) / 6)^alpha.
//
// The search itself is model-agnostic: it only needs a scorer that maps a
// set of prefixes to next-token log-probabilities.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "mmtlab/model.hpp"
#include "mmtlab/tensor.hpp"

namespace mmt::decode {

struct Hypothesis {
  /// Generated ids, without the start symbol; ends with the end symbol when finished.
  std::vector<int> tokens;
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / length_penalty(tokens.size(), alpha)
  bool finished = false;

  bool operator==(const Hypothesis&) const = default;
};

double length_penalty(std::size_t length, double alpha);

/// Log-probability rows, one per prefix. -inf marks tokens that must not be produced.
using StepScorer = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>& prefixes)>;

struct BeamOptions {
  std::size_t beam_size = 10;
  double alpha = 1.0;
  std::size_t max_len = 64;
};

/// Each step keeps the beam_size best expansions of the live hypotheses;
/// expansions ending in eos_id retire as finished. Returns the best finished
/// hypothesis by score, or the best unfinished one (finished == false) when
/// none finished within max_len. For beam_size > 1 the greedy result is also
/// a candidate, so widening the beam never lowers the returned score.
Hypothesis beam_search(const StepScorer& scorer, int eos_id, const BeamOptions& options);

/// Argmax decoding; lowest id wins ties.
Hypothesis greedy_search(const StepScorer& scorer, int eos_id, std::size_t max_len, double alpha);

struct DecodeOptions {
  std::size_t beam_size = 10;
  double alpha = 1.0;
  std::size_t max_len = 64;
  std::size_t threads = 1;
};

/// Scorer for one source sentence: encodes once, then scores prefixes in a
/// batch. visual is the item's model input matrix (AIF rows or AIC 1 x dim).
StepScorer model_scorer(const model::Transformer& model, const std::vector<int>& source_ids, const Tensor* visual);

Hypothesis beam_search(const model::Transformer& model, const std::vector<int>& source_ids, const Tensor* visual,
                       const DecodeOptions& options);

/// Decodes every source; visuals (when given) are aligned with sources.
/// Results are index-aligned and independent of the thread count.
std::vector<Hypothesis> translate(const model::Transformer& model, const std::vector<std::vector<int>>& sources,
                                  const std::vector<const Tensor*>& visuals, const DecodeOptions& options);

}  // namespace mmt::decode
