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

// Source-side verb masking over POS/lemma-annotated sentences.
//
// ORG leaves the text alone, ACT replaces verbal tokens whose lemma is an
// action verb, ALL replaces every verbal token. Verbal means a coarse tag of
// VERB or AUX.

#include <cstddef>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mmt::masking {

/// Universal coarse part-of-speech tags.
enum class Pos { Adj, Adp, Adv, Aux, Cconj, Det, Intj, Noun, Num, Part, Pron, Propn, Punct, Sconj, Sym, Verb, X };

Pos parse_pos(std::string_view tag);
std::string_view pos_name(Pos pos);
inline bool is_verbal(Pos pos) { return pos == Pos::Verb || pos == Pos::Aux; }

struct AnnotatedToken {
  std::string surface;
  std::string lemma;
  Pos pos = Pos::X;

  bool operator==(const AnnotatedToken&) const = default;
};

struct AnnotatedSentence {
  std::vector<AnnotatedToken> tokens;

  std::vector<std::string> surfaces() const;
  bool operator==(const AnnotatedSentence&) const = default;
};

enum class MaskVariant { Org, Act, All };

MaskVariant parse_variant(std::string_view name);
std::string_view variant_name(MaskVariant v);

/// Lemmatized action verbs, matched case-insensitively.
class ActionLexicon {
 public:
  ActionLexicon() = default;
  explicit ActionLexicon(const std::vector<std::string>& lemmas);

  bool contains(std::string_view lemma) const;
  std::size_t size() const noexcept { return verbs_.size(); }
  const std::set<std::string>& verbs() const noexcept { return verbs_; }

 private:
  std::set<std::string> verbs_;
};

/// Keeps the verb component of a '+'-joined category label. The verb is the
/// first component ending in "-ing"; single-component labels pass through.
std::string reduce_label(std::string_view category_label);

/// Rule-based lemma for a gerund or bare verb form ("playing" -> "play").
std::string lemmatize_verb(std::string_view form);

/// Masks one sentence. Non-verbal tokens and the sentence length are preserved.
std::vector<std::string> mask(const AnnotatedSentence& sentence, MaskVariant variant, const ActionLexicon& lexicon,
                              std::string_view placeholder);

/// Same as mask() but keeps annotations: masked tokens become the placeholder
/// with tag X, so masking the result again changes nothing.
AnnotatedSentence mask_annotated(const AnnotatedSentence& sentence, MaskVariant variant, const ActionLexicon& lexicon,
                                 std::string_view placeholder);

struct MaskStats {
  std::size_t masked = 0;
  std::size_t total = 0;

  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(masked) / static_cast<double>(total); }
};

MaskStats mask_stats(const std::vector<AnnotatedSentence>& corpus, MaskVariant variant, const ActionLexicon& lexicon);

// File formats.

/// UTF-8 TSV, one "surface<TAB>lemma<TAB>pos" token per line, blank line
/// between sentences.
std::vector<AnnotatedSentence> read_annotated_corpus(std::istream& in);
void write_annotated_corpus(std::ostream& out, const std::vector<AnnotatedSentence>& corpus);

/// One raw category label per line. An optional second tab-separated column
/// overrides the computed lemma. Labels are reduced and lemmatized on load.
ActionLexicon read_lexicon(std::istream& in);

}  // namespace mmt::masking
