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

#include "mmtlab/masking.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>

#include "mmtlab/error.hpp"

namespace mmt::masking {

namespace {

constexpr std::array<std::pair<std::string_view, Pos>, 17> kPosNames{{
    {"ADJ", Pos::Adj},     {"ADP", Pos::Adp},   {"ADV", Pos::Adv},     {"AUX", Pos::Aux},   {"CCONJ", Pos::Cconj},
    {"DET", Pos::Det},     {"INTJ", Pos::Intj}, {"NOUN", Pos::Noun},   {"NUM", Pos::Num},   {"PART", Pos::Part},
    {"PRON", Pos::Pron},   {"PROPN", Pos::Propn}, {"PUNCT", Pos::Punct}, {"SCONJ", Pos::Sconj}, {"SYM", Pos::Sym},
    {"VERB", Pos::Verb},   {"X", Pos::X},
}};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }
bool is_consonant(char c) { return std::isalpha(static_cast<unsigned char>(c)) && !is_vowel(c); }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Gerunds whose stems the suffix rules get wrong.
const std::map<std::string, std::string, std::less<>>& lemma_exceptions() {
  static const std::map<std::string, std::string, std::less<>> table{
      {"adding", "add"},   {"dying", "die"},     {"lying", "lie"},        {"tying", "tie"},
      {"opening", "open"}, {"entering", "enter"}, {"covering", "cover"},   {"gathering", "gather"},
      {"being", "be"},     {"seeing", "see"},    {"fleeing", "flee"},     {"skiing", "ski"},
      {"using", "use"},    {"making", "make"},   {"taking", "take"},      {"giving", "give"},
      {"coming", "come"},  {"having", "have"},   {"leaving", "leave"},    {"moving", "move"},
      {"loving", "love"},  {"living", "live"},   {"buzzing", "buzz"},     {"spilling", "spill"},
  };
  return table;
}

}  // namespace

Pos parse_pos(std::string_view tag) {
  for (const auto& [name, pos] : kPosNames) {
    if (name == tag) return pos;
  }
  throw FormatError("unknown POS tag '" + std::string(tag) + "'");
}

std::string_view pos_name(Pos pos) {
  for (const auto& [name, p] : kPosNames) {
    if (p == pos) return name;
  }
  return "X";
}

std::vector<std::string> AnnotatedSentence::surfaces() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.surface);
  return out;
}

MaskVariant parse_variant(std::string_view name) {
  const auto n = lower(name);
  if (n == "org") return MaskVariant::Org;
  if (n == "act") return MaskVariant::Act;
  if (n == "all") return MaskVariant::All;
  throw Error("unknown mask variant '" + std::string(name) + "' (expected ORG, ACT or ALL)");
}

std::string_view variant_name(MaskVariant v) {
  switch (v) {
    case MaskVariant::Org: return "ORG";
    case MaskVariant::Act: return "ACT";
    case MaskVariant::All: return "ALL";
  }
  throw Error("unknown mask variant");
}

ActionLexicon::ActionLexicon(const std::vector<std::string>& lemmas) {
  for (const auto& l : lemmas) {
    auto t = lower(trim(l));
    if (t.empty()) continue;
    if (t.find_first_of(" \t+") != std::string::npos) {
      throw Error("action lexicon entries must be single tokens, got '" + l + "'");
    }
    verbs_.insert(std::move(t));
  }
}

bool ActionLexicon::contains(std::string_view lemma) const { return verbs_.count(lower(lemma)) > 0; }

std::string reduce_label(std::string_view category_label) {
  const auto label = trim(category_label);
  auto parts = split(label, '+');
  for (auto& p : parts) p = trim(p);
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const std::string& p) { return p.empty(); })) {
    throw Error("malformed category label '" + std::string(category_label) + "'");
  }
  if (parts.size() == 1) return parts.front();
  for (const auto& p : parts) {
    if (p.size() > 4 && ends_with(lower(p), "ing")) return p;
  }
  throw Error("category label '" + std::string(category_label) + "' has no identifiable verb component");
}

std::string lemmatize_verb(std::string_view form) {
  const std::string word = lower(trim(form));
  if (auto it = lemma_exceptions().find(word); it != lemma_exceptions().end()) return it->second;
  if (!ends_with(word, "ing") || word.size() < 5) return word;
  std::string stem = word.substr(0, word.size() - 3);
  if (std::none_of(stem.begin(), stem.end(), [](char c) { return is_vowel(c) || c == 'y'; })) return word;

  const char last = stem.back();
  const char prev = stem[stem.size() - 2];
  // running -> run, but rolling -> roll, kissing -> kiss
  if (last == prev && is_consonant(last) && std::string_view("lsfz").find(last) == std::string_view::npos) {
    stem.pop_back();
    return stem;
  }
  // dancing -> dance, diving -> dive, arguing -> argue, juggling -> juggle, charging -> charge
  if (last == 'c' || last == 'v' || last == 'u') return stem + "e";
  if (last == 'l' && is_consonant(prev) && prev != 'l' && prev != 'r') return stem + "e";
  if (last == 'g' && (prev == 'r' || prev == 'd')) return stem + "e";
  if (last == 's' && is_consonant(prev) && prev != 's') return stem + "e";
  // riding -> ride, skating -> skate, but visiting -> visit, eating -> eat
  if (stem.size() <= 4 && stem.size() >= 3 && is_consonant(last) && std::string_view("wxy").find(last) == std::string_view::npos &&
      (is_vowel(prev) || prev == 'y') && !is_vowel(stem[stem.size() - 3]) && !ends_with(stem, "en") && !ends_with(stem, "er") &&
      !ends_with(stem, "on") && !ends_with(stem, "el")) {
    return stem + "e";
  }
  return stem;
}

std::vector<std::string> mask(const AnnotatedSentence& sentence, MaskVariant variant, const ActionLexicon& lexicon,
                              std::string_view placeholder) {
  return mask_annotated(sentence, variant, lexicon, placeholder).surfaces();
}

AnnotatedSentence mask_annotated(const AnnotatedSentence& sentence, MaskVariant variant, const ActionLexicon& lexicon,
                                 std::string_view placeholder) {
  if (placeholder.empty()) throw Error("mask placeholder must not be empty");
  AnnotatedSentence out = sentence;
  if (variant == MaskVariant::Org) return out;
  for (auto& token : out.tokens) {
    if (!is_verbal(token.pos)) continue;
    if (variant == MaskVariant::Act && !lexicon.contains(token.lemma)) continue;
    token.surface = std::string(placeholder);
    token.lemma = std::string(placeholder);
    token.pos = Pos::X;
  }
  return out;
}

MaskStats mask_stats(const std::vector<AnnotatedSentence>& corpus, MaskVariant variant, const ActionLexicon& lexicon) {
  MaskStats stats;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence.tokens) {
      ++stats.total;
      if (variant == MaskVariant::Org || !is_verbal(token.pos)) continue;
      if (variant == MaskVariant::All || lexicon.contains(token.lemma)) ++stats.masked;
    }
  }
  return stats;
}

std::vector<AnnotatedSentence> read_annotated_corpus(std::istream& in) {
  std::vector<AnnotatedSentence> corpus;
  AnnotatedSentence current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!current.tokens.empty()) corpus.push_back(std::move(current));
      current = {};
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw FormatError("annotated corpus line " + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    if (fields[0].empty()) throw FormatError("annotated corpus line " + std::to_string(line_no) + ": empty surface");
    try {
      current.tokens.push_back({fields[0], fields[1], parse_pos(fields[2])});
    } catch (const FormatError& e) {
      throw FormatError("annotated corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!current.tokens.empty()) corpus.push_back(std::move(current));
  return corpus;
}

void write_annotated_corpus(std::ostream& out, const std::vector<AnnotatedSentence>& corpus) {
  for (const auto& sentence : corpus) {
    for (const auto& t : sentence.tokens) out << t.surface << '\t' << t.lemma << '\t' << pos_name(t.pos) << '\n';
    out << '\n';
  }
}

ActionLexicon read_lexicon(std::istream& in) {
  std::vector<std::string> lemmas;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto tab = t.find('\t');
    if (tab != std::string::npos) {
      lemmas.push_back(trim(t.substr(tab + 1)));
    } else {
      lemmas.push_back(lemmatize_verb(reduce_label(t)));
    }
  }
  return ActionLexicon(lemmas);
}

}  // namespace mmt::masking
