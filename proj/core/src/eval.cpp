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

#include "mmtlab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "mmtlab/error.hpp"

namespace mmt::eval {

namespace {

using Ngram = std::vector<std::string_view>;

std::map<Ngram, std::size_t> count_ngrams(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
    ++counts[g];
  }
  return counts;
}

}  // namespace

BleuStats& BleuStats::operator+=(const BleuStats& other) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += other.matches[n];
    totals[n] += other.totals[n];
  }
  hyp_len += other.hyp_len;
  ref_len += other.ref_len;
  return *this;
}

std::vector<std::string> tokenize(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

BleuStats sentence_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  BleuStats s;
  s.hyp_len = hyp.size();
  s.ref_len = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto h = count_ngrams(hyp, n);
    const auto r = count_ngrams(ref, n);
    for (const auto& [gram, c] : h) {
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += std::min(c, it->second);
    }
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

double bleu_from_stats(const BleuStats& stats) {
  if (stats.hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (stats.matches[n] == 0 || stats.totals[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]));
  }
  const double ratio = static_cast<double>(stats.ref_len) / static_cast<double>(stats.hyp_len);
  const double log_bp = std::min(0.0, 1.0 - ratio);
  return 100.0 * std::exp(log_bp + log_sum / 4.0);
}

double bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size()) {
    throw Error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw Error("bleu: empty hypothesis set");
  BleuStats total;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) total += sentence_stats(tokenize(hypotheses[i]), tokenize(references[i]));
  return bleu_from_stats(total);
}

RankScores rank_score(const std::vector<RankingItem>& items, const std::vector<std::string>& systems,
                      const RankOptions& options) {
  if (systems.empty()) throw Error("rank_score: no systems");
  RankScores out;
  std::map<std::string, std::size_t> credit;
  for (const auto& s : systems) credit[s] = 0;
  for (const auto& item : items) {
    int best = std::numeric_limits<int>::max();
    for (const auto& s : systems) {
      auto it = item.ranks.find(s);
      if (it == item.ranks.end()) {
        throw Error("rank_score: item '" + item.item + "' (annotator '" + item.annotator + "') has no rank for '" +
                    s + "'");
      }
      if (it->second < 0 || it->second > 3) {
        throw Error("rank_score: rank " + std::to_string(it->second) + " out of range in item '" + item.item + "'");
      }
      if (it->second != 0) best = std::min(best, it->second);
    }
    if (best == std::numeric_limits<int>::max()) {
      if (options.count_all_zero_items) {
        ++out.counted;
      } else {
        ++out.excluded;
      }
      continue;
    }
    ++out.counted;
    for (const auto& s : systems) {
      if (item.ranks.at(s) == best) ++credit[s];
    }
  }
  for (const auto& s : systems) {
    out.scores[s] = out.counted == 0 ? 0.0 : static_cast<double>(credit[s]) / static_cast<double>(out.counted);
  }
  return out;
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_lines(in);
}

std::vector<RankingItem> read_rankings(std::istream& in) {
  std::vector<RankingItem> items;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 4) throw FormatError("rankings line " + std::to_string(line_no) + ": expected 4 fields");
    int rank = 0;
    try {
      std::size_t used = 0;
      rank = std::stoi(fields[3], &used);
      if (used != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("rankings line " + std::to_string(line_no) + ": bad rank '" + fields[3] + "'");
    }
    if (rank < 0 || rank > 3) throw FormatError("rankings line " + std::to_string(line_no) + ": rank must be 0..3");
    const auto key = std::make_pair(fields[0], fields[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, items.size()).first;
      items.push_back({fields[0], fields[1], {}});
    }
    auto& ranks = items[it->second].ranks;
    if (!ranks.emplace(fields[2], rank).second) {
      throw FormatError("rankings line " + std::to_string(line_no) + ": duplicate system '" + fields[2] + "'");
    }
  }
  return items;
}

}  // namespace mmt::eval
