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

// Corpus BLEU-4 and the pairwise human-ranking score.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mmt::eval {

struct BleuStats {
  std::array<std::size_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::size_t, 4> totals{};   // hypothesis n-grams, n = 1..4
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& other);
};

/// Whitespace tokenization; input is expected pre-tokenized and lowercased.
std::vector<std::string> tokenize(std::string_view line);

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref);

/// 0..100. No smoothing: any zero precision gives 0.
double bleu_from_stats(const BleuStats& stats);

/// Corpus BLEU over whitespace-tokenized lines.
double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references);

/// One annotator's ranks for one item; rank 0 means incomprehensible.
struct RankingItem {
  std::string item;
  std::string annotator;
  std::map<std::string, int> ranks;
};

/// Share of counted items where a system is ranked at least as well as every
/// other system with a nonzero rank. Items where every rank is zero are not
/// counted; their number is returned in excluded.
struct RankScores {
  std::map<std::string, double> scores;
  std::size_t counted = 0;
  std::size_t excluded = 0;
};

struct RankOptions {
  /// Keep all-zero items in the denominator (no system earns credit on them).
  bool count_all_zero_items = false;
};

RankScores rank_score(const std::vector<RankingItem>& items, const std::vector<std::string>& systems,
                      const RankOptions& options = {});

// File formats.

/// One sentence per line; a trailing CR is dropped.
std::vector<std::string> read_lines(std::istream& in);
std::vector<std::string> read_lines(const std::string& path);

/// TSV "item<TAB>annotator<TAB>system<TAB>rank". Rows are grouped by
/// (item, annotator) in first-seen order.
std::vector<RankingItem> read_rankings(std::istream& in);

}  // namespace mmt::eval
