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

#include "mmtlab/bpe.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "mmtlab/error.hpp"

namespace mmt::bpe {

namespace {

constexpr std::string_view kMagic = "mmtlab-bpe";
constexpr std::string_view kVersion = "v1";

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void merge_in_place(std::vector<std::string>& symbols, const MergePair& pair) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(pair.first + pair.second);
      i += 2;
    } else {
      out.push_back(std::move(symbols[i]));
      ++i;
    }
  }
  symbols = std::move(out);
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view word) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < word.size();) {
    std::size_t len = utf8_length(static_cast<unsigned char>(word[i]));
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) >> 6) != 0x2) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

int BpeModel::id_of(std::string_view subword) const {
  auto it = symbol_to_id_.find(subword);
  return it == symbol_to_id_.end() ? kUnkId : it->second;
}

bool BpeModel::contains(std::string_view subword) const { return symbol_to_id_.find(subword) != symbol_to_id_.end(); }

const std::string& BpeModel::symbol_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_symbol_.size()) {
    throw Error("bpe id " + std::to_string(id) + " outside vocabulary of " + std::to_string(id_to_symbol_.size()));
  }
  return id_to_symbol_[static_cast<std::size_t>(id)];
}

bool BpeModel::is_protected(std::string_view token) const {
  return std::find(protected_.begin(), protected_.end(), token) != protected_.end();
}

std::vector<std::string> BpeModel::segment_word(std::string_view word) const {
  if (is_protected(word)) return {std::string(word)};
  auto symbols = utf8_chars(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merge_rank_.size();
    const MergePair* best = nullptr;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(MergePair{symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best = &it->first;
      }
    }
    if (!best) break;
    merge_in_place(symbols, *best);
  }
  return symbols;
}

std::vector<std::string> BpeModel::apply(const Sentence& tokens) const {
  std::vector<std::string> out;
  for (const auto& token : tokens) {
    auto pieces = segment_word(token);
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) out.push_back(pieces[i] + marker_);
    if (!pieces.empty()) out.push_back(std::move(pieces.back()));
  }
  return out;
}

std::vector<int> BpeModel::encode(const Sentence& tokens) const {
  std::vector<int> ids;
  for (const auto& sub : apply(tokens)) ids.push_back(id_of(sub));
  return ids;
}

Sentence BpeModel::detokenize(const std::vector<std::string>& subwords) const {
  Sentence out;
  std::string current;
  bool open = false;
  for (const auto& sub : subwords) {
    if (!is_protected(sub) && ends_with(sub, marker_) && sub.size() > marker_.size()) {
      current += sub.substr(0, sub.size() - marker_.size());
      open = true;
    } else {
      current += sub;
      out.push_back(std::move(current));
      current.clear();
      open = false;
    }
  }
  if (open) out.push_back(std::move(current));
  return out;
}

Sentence BpeModel::decode(const std::vector<int>& ids) const {
  std::vector<std::string> subwords;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == kBosId) continue;
    subwords.push_back(symbol_of(id));
  }
  return detokenize(subwords);
}

void BpeModel::build_index() {
  symbol_to_id_.clear();
  for (std::size_t i = 0; i < id_to_symbol_.size(); ++i) symbol_to_id_.emplace(id_to_symbol_[i], static_cast<int>(i));
  merge_rank_.clear();
  for (std::size_t i = 0; i < merges_.size(); ++i) merge_rank_.emplace(merges_[i], i);
}

void BpeModel::save(std::ostream& out) const {
  out << kMagic << ' ' << kVersion << " merges=" << merges_.size() << " vocab=" << id_to_symbol_.size()
      << " specials=" << (kPlaceholderId + protected_.size()) << " marker=" << marker_ << '\n';
  for (const auto& [left, right] : merges_) out << left << ' ' << right << '\n';
  for (std::size_t i = 0; i < id_to_symbol_.size(); ++i) out << id_to_symbol_[i] << '\t' << i << '\n';
}

BpeModel BpeModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("bpe model: missing header");
  std::istringstream header(strip_cr(line));
  std::string magic, version;
  header >> magic >> version;
  if (magic != kMagic || version != kVersion) throw FormatError("bpe model: unrecognized header '" + line + "'");
  std::size_t n_merges = 0, n_vocab = 0, n_specials = 0;
  BpeModel model;
  bool have_merges = false, have_vocab = false, have_specials = false, have_marker = false;
  std::string field;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("bpe model: bad header field '" + field + "'");
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    try {
      if (key == "merges") n_merges = std::stoul(value), have_merges = true;
      else if (key == "vocab") n_vocab = std::stoul(value), have_vocab = true;
      else if (key == "specials") n_specials = std::stoul(value), have_specials = true;
      else if (key == "marker") model.marker_ = value, have_marker = true;
    } catch (const std::exception&) {
      throw FormatError("bpe model: bad header value '" + field + "'");
    }
  }
  if (!have_merges || !have_vocab || !have_specials || !have_marker || model.marker_.empty()) {
    throw FormatError("bpe model: header must give merges, vocab, specials and marker");
  }
  if (n_specials < static_cast<std::size_t>(kPlaceholderId) || n_specials > n_vocab) {
    throw FormatError("bpe model: inconsistent specials count");
  }
  for (std::size_t i = 0; i < n_merges; ++i) {
    if (!std::getline(in, line)) throw FormatError("bpe model: truncated merge list");
    line = strip_cr(line);
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size() ||
        line.find(' ', space + 1) != std::string::npos) {
      throw FormatError("bpe model: bad merge line " + std::to_string(i + 2) + ": '" + line + "'");
    }
    model.merges_.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  for (std::size_t i = 0; i < n_vocab; ++i) {
    if (!std::getline(in, line)) throw FormatError("bpe model: truncated vocabulary");
    line = strip_cr(line);
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos || tab == 0) throw FormatError("bpe model: bad vocabulary line '" + line + "'");
    std::size_t id = 0;
    try {
      id = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError("bpe model: bad vocabulary id in '" + line + "'");
    }
    if (id != i) throw FormatError("bpe model: vocabulary ids must be dense and ordered");
    model.id_to_symbol_.push_back(line.substr(0, tab));
  }
  const std::string_view fixed[] = {kPad, kBos, kEos, kUnk};
  for (int i = 0; i < kPlaceholderId; ++i) {
    if (model.id_to_symbol_[static_cast<std::size_t>(i)] != fixed[i]) {
      throw FormatError("bpe model: reserved id " + std::to_string(i) + " must be " + std::string(fixed[i]));
    }
  }
  for (std::size_t i = kPlaceholderId; i < n_specials; ++i) model.protected_.push_back(model.id_to_symbol_[i]);
  model.build_index();
  return model;
}

BpeModel learn_merges(const std::vector<Sentence>& corpus, std::size_t n_merges,
                      const std::vector<std::string>& protected_symbols, std::string_view marker) {
  if (marker.empty()) throw Error("bpe continuation marker must not be empty");
  BpeModel model;
  model.marker_ = std::string(marker);
  for (const auto& p : protected_symbols) {
    if (p.empty() || p == kPad || p == kBos || p == kEos || p == kUnk) {
      throw Error("invalid protected symbol '" + p + "'");
    }
    if (std::find(model.protected_.begin(), model.protected_.end(), p) == model.protected_.end()) {
      model.protected_.push_back(p);
    }
  }

  std::map<std::string, std::size_t> word_freq;
  for (const auto& sentence : corpus)
    for (const auto& token : sentence)
      if (!token.empty()) ++word_freq[token];
  if (word_freq.empty()) throw Error("cannot learn BPE merges from an empty corpus");

  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  std::set<std::string> inventory;
  for (const auto& [word, freq] : word_freq) {
    if (model.is_protected(word)) continue;
    auto chars = utf8_chars(word);
    inventory.insert(chars.begin(), chars.end());
    words.emplace_back(std::move(chars), freq);
  }

  for (std::size_t step = 0; step < n_merges; ++step) {
    std::map<MergePair, std::size_t> counts;
    for (const auto& [symbols, freq] : words)
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) counts[{symbols[i], symbols[i + 1]}] += freq;
    if (counts.empty()) break;
    // map order is lexicographic, so the first maximum is the tie winner
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    const MergePair pair = best->first;
    for (auto& entry : words) merge_in_place(entry.first, pair);
    model.merges_.push_back(pair);
  }

  std::set<std::string> seen;
  auto add = [&](std::string sym) {
    if (seen.insert(sym).second) model.id_to_symbol_.push_back(std::move(sym));
  };
  add(std::string(kPad));
  add(std::string(kBos));
  add(std::string(kEos));
  add(std::string(kUnk));
  for (const auto& p : model.protected_) add(p);
  for (const auto& c : inventory) {
    add(c);
    add(c + model.marker_);
  }
  for (const auto& [left, right] : model.merges_) {
    add(left + right);
    add(left + right + model.marker_);
  }
  model.build_index();
  return model;
}

}  // namespace mmt::bpe
