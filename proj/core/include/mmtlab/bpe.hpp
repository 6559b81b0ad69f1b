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

// Byte-pair-encoding subword model: greedy merge learning and application.
//
// Words are split into UTF-8 code points and merges never cross a word
// boundary. On output every non-final subword of a word carries the
// continuation marker ("@@" by default), so concatenating subwords and
// dropping the marker restores the original tokens.
//
// Ids 0..3 are <pad>, <s>, </s>, <unk>; the protected symbols (the mask
// placeholder first) follow. Protected tokens are atomic: they are never
// split and never take part in a merge.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmt::bpe {

inline constexpr std::string_view kPad = "<pad>";
inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kDefaultPlaceholder = "<v>";
inline constexpr std::string_view kDefaultMarker = "@@";

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kPlaceholderId = 4;

using Sentence = std::vector<std::string>;
using MergePair = std::pair<std::string, std::string>;

/// Splits a UTF-8 string into code point substrings. Invalid bytes are kept
/// as single-byte symbols.
std::vector<std::string> utf8_chars(std::string_view word);

class BpeModel {
 public:
  BpeModel() = default;

  const std::vector<MergePair>& merges() const noexcept { return merges_; }
  const std::vector<std::string>& symbols() const noexcept { return id_to_symbol_; }
  const std::vector<std::string>& protected_symbols() const noexcept { return protected_; }
  const std::string& marker() const noexcept { return marker_; }
  std::size_t vocab_size() const noexcept { return id_to_symbol_.size(); }

  /// Id of a subword, or kUnkId.
  int id_of(std::string_view subword) const;
  bool contains(std::string_view subword) const;
  const std::string& symbol_of(int id) const;

  /// Segments one word into marker-free pieces.
  std::vector<std::string> segment_word(std::string_view word) const;
  /// Segments a token sequence into marked subwords.
  std::vector<std::string> apply(const Sentence& tokens) const;
  /// apply() followed by id lookup; unseen subwords become <unk>.
  std::vector<int> encode(const Sentence& tokens) const;
  /// Id sequence back to tokens. Stops at </s>, skips <pad> and <s>.
  Sentence decode(const std::vector<int>& ids) const;

  /// Joins marked subwords back into whole tokens.
  Sentence detokenize(const std::vector<std::string>& subwords) const;

  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in);

  bool operator==(const BpeModel&) const = default;

 private:
  friend BpeModel learn_merges(const std::vector<Sentence>&, std::size_t, const std::vector<std::string>&,
                               std::string_view);

  void build_index();
  bool is_protected(std::string_view token) const;

  std::vector<MergePair> merges_;
  std::vector<std::string> protected_;
  std::string marker_{kDefaultMarker};
  std::vector<std::string> id_to_symbol_;
  std::map<std::string, int, std::less<>> symbol_to_id_;
  std::map<MergePair, std::size_t> merge_rank_;
};

/// Learns up to n_merges merges by repeatedly merging the most frequent
/// adjacent symbol pair (ties go to the lexicographically smallest pair).
/// Learning stops early when no pair is left. Throws on an empty corpus.
BpeModel learn_merges(const std::vector<Sentence>& corpus, std::size_t n_merges,
                      const std::vector<std::string>& protected_symbols = {std::string(kDefaultPlaceholder)},
                      std::string_view marker = kDefaultMarker);

}  // namespace mmt::bpe
