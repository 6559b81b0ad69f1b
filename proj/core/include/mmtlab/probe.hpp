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

// Incongruent decoding: decode a test set once with its own visual features
// and once with the feature assignment reversed over the whole set.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmtlab/bpe.hpp"
#include "mmtlab/decode.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/train.hpp"

namespace mmt::probe {

/// Item i receives item n-1-i. Self-inverse; throws for fewer than two items.
template <typename T>
std::vector<T> make_incongruent(const std::vector<T>& items) {
  if (items.size() < 2) throw Error("incongruent reversal needs at least two items");
  return std::vector<T>(items.rbegin(), items.rend());
}

struct ProbeResult {
  double congruent_bleu = 0.0;
  double incongruent_bleu = 0.0;
  double delta = 0.0;  // incongruent - congruent
  std::vector<std::string> congruent_lines;
  std::vector<std::string> incongruent_lines;
};

/// Throws for text-only models.
ProbeResult probe(const model::Transformer& model, const std::vector<train::Example>& test_set,
                  const std::vector<std::string>& references, const bpe::BpeModel& target_bpe,
                  const decode::DecodeOptions& options);

struct ProbeEntry {
  std::string setup;    // e.g. "AIF-emb"
  std::string variant;  // ORG, ACT or ALL
  double congruent_bleu = 0.0;
  double incongruent_bleu = 0.0;
  double delta = 0.0;

  bool operator==(const ProbeEntry&) const = default;
};

struct ProbeReport {
  std::vector<ProbeEntry> entries;

  void write_table(std::ostream& out) const;
  void write_jsonl(std::ostream& out) const;
};

}  // namespace mmt::probe
