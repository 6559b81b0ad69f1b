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

#include "mmtlab/decode.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "mmtlab/bpe.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/kernels.hpp"

namespace mmt::decode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Candidate {
  double log_prob;
  std::size_t parent;
  int token;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.parent != b.parent) return a.parent < b.parent;
  return a.token < b.token;
}

void check_options(const BeamOptions& o) {
  if (o.beam_size == 0) throw Error("beam size must be at least 1");
  if (!(o.alpha >= 0.0)) throw Error("length penalty alpha must be nonnegative");
  if (o.max_len == 0) throw Error("max_len must be at least 1");
}

Hypothesis make_hypothesis(std::vector<int> tokens, double log_prob, bool finished, double alpha) {
  Hypothesis h;
  h.score = log_prob / length_penalty(tokens.size(), alpha);
  h.tokens = std::move(tokens);
  h.log_prob = log_prob;
  h.finished = finished;
  return h;
}

Tensor tile_rows(const Tensor& t, std::size_t times) {
  Tensor out({t.rows() * times, t.cols()});
  for (std::size_t i = 0; i < times; ++i) std::copy(t.storage().begin(), t.storage().end(), out.data() + i * t.size());
  return out;
}

}  // namespace

double length_penalty(std::size_t length, double alpha) {
  return std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

Hypothesis greedy_search(const StepScorer& scorer, int eos_id, std::size_t max_len, double alpha) {
  if (max_len == 0) throw Error("max_len must be at least 1");
  std::vector<int> tokens;
  double log_prob = 0.0;
  for (std::size_t step = 0; step < max_len; ++step) {
    const auto rows = scorer({tokens});
    if (rows.size() != 1) throw Error("scorer returned the wrong number of rows");
    const auto& row = rows.front();
    int best = -1;
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (row[v] == kNegInf) continue;
      if (best < 0 || row[v] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
    }
    if (best < 0) throw Error("scorer produced no finite log-probabilities");
    log_prob += row[static_cast<std::size_t>(best)];
    tokens.push_back(best);
    if (best == eos_id) return make_hypothesis(std::move(tokens), log_prob, true, alpha);
  }
  return make_hypothesis(std::move(tokens), log_prob, false, alpha);
}

Hypothesis beam_search(const StepScorer& scorer, int eos_id, const BeamOptions& options) {
  check_options(options);
  struct Live {
    std::vector<int> tokens;
    double log_prob;
  };
  std::vector<Live> alive{{{}, 0.0}};
  std::vector<Hypothesis> finished;
  const double final_penalty = length_penalty(options.max_len, options.alpha);

  for (std::size_t step = 0; step < options.max_len && !alive.empty(); ++step) {
    std::vector<std::vector<int>> prefixes;
    prefixes.reserve(alive.size());
    for (const auto& a : alive) prefixes.push_back(a.tokens);
    const auto rows = scorer(prefixes);
    if (rows.size() != alive.size()) throw Error("scorer returned the wrong number of rows");

    std::vector<Candidate> candidates;
    for (std::size_t a = 0; a < alive.size(); ++a) {
      for (std::size_t v = 0; v < rows[a].size(); ++v) {
        if (rows[a][v] == kNegInf) continue;
        candidates.push_back({alive[a].log_prob + rows[a][v], a, static_cast<int>(v)});
      }
    }
    if (candidates.empty()) throw Error("scorer produced no finite log-probabilities");
    const std::size_t keep = std::min(options.beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);

    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = candidates[i];
      auto tokens = alive[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == eos_id) {
        finished.push_back(make_hypothesis(std::move(tokens), c.log_prob, true, options.alpha));
      } else {
        next.push_back({std::move(tokens), c.log_prob});
      }
    }
    alive = std::move(next);

    // log-probs only fall and the penalty only grows, so no live hypothesis
    // can finish above log_prob / penalty(max_len)
    if (!finished.empty() && !alive.empty()) {
      double best_finished = kNegInf;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double bound = kNegInf;
      for (const auto& a : alive) bound = std::max(bound, a.log_prob / final_penalty);
      if (best_finished >= bound) break;
    }
  }

  Hypothesis result;
  if (!finished.empty()) {
    result = finished.front();
    for (const auto& f : finished)
      if (f.score > result.score) result = f;
  } else {
    result = make_hypothesis(alive.front().tokens, alive.front().log_prob, false, options.alpha);
    for (const auto& a : alive) {
      auto h = make_hypothesis(a.tokens, a.log_prob, false, options.alpha);
      if (h.score > result.score) result = std::move(h);
    }
  }
  if (options.beam_size > 1) {
    auto greedy = greedy_search(scorer, eos_id, options.max_len, options.alpha);
    if (greedy.score > result.score) result = std::move(greedy);
  }
  return result;
}

StepScorer model_scorer(const model::Transformer& model, const std::vector<int>& source_ids, const Tensor* visual) {
  const auto& config = model.config();
  if (config.mode == model::Mode::TextOnly && visual) throw Error("visual features supplied to a text-only model");
  if (config.mode != model::Mode::TextOnly && !visual) {
    throw Error(std::string(model::mode_name(config.mode)) + " model requires visual features");
  }
  ad::NoGradGuard guard;
  auto ctx = model::ForwardContext::inference();
  const auto source = model::Batch::from({source_ids}, bpe::kPadId);
  const Tensor memory = model.encode(source, ctx).value();
  std::optional<Tensor> visual_copy;
  if (visual) visual_copy = *visual;

  return [&model, source_ids, memory, visual_copy](const std::vector<std::vector<int>>& prefixes) {
    ad::NoGradGuard inner;
    auto ctx = model::ForwardContext::inference();
    const std::size_t k = prefixes.size();
    std::vector<std::vector<int>> inputs;
    inputs.reserve(k);
    for (const auto& p : prefixes) {
      std::vector<int> in{bpe::kBosId};
      in.insert(in.end(), p.begin(), p.end());
      inputs.push_back(std::move(in));
    }
    const auto target = model::Batch::from(inputs, bpe::kPadId);
    const auto source = model::Batch::from(std::vector<std::vector<int>>(k, source_ids), bpe::kPadId);
    std::optional<ad::Var> vis;
    if (visual_copy) vis = ad::constant(tile_rows(*visual_copy, k));
    const auto logits = model.decode_forward(ad::constant(tile_rows(memory, k)), source, vis, target, ctx).value();
    std::vector<std::vector<double>> rows;
    rows.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      auto row = log_softmax(logits.row(i * target.len + target.lengths[i] - 1));
      row[bpe::kPadId] = kNegInf;
      row[bpe::kBosId] = kNegInf;
      rows.push_back(std::move(row));
    }
    return rows;
  };
}

Hypothesis beam_search(const model::Transformer& model, const std::vector<int>& source_ids, const Tensor* visual,
                       const DecodeOptions& options) {
  auto scorer = model_scorer(model, source_ids, visual);
  const std::size_t max_len = std::min(options.max_len, model.config().max_len);
  return beam_search(scorer, bpe::kEosId, BeamOptions{options.beam_size, options.alpha, max_len});
}

std::vector<Hypothesis> translate(const model::Transformer& model, const std::vector<std::vector<int>>& sources,
                                  const std::vector<const Tensor*>& visuals, const DecodeOptions& options) {
  if (!visuals.empty() && visuals.size() != sources.size()) {
    throw Error("translate: " + std::to_string(visuals.size()) + " visual inputs for " +
                std::to_string(sources.size()) + " sources");
  }
  std::vector<Hypothesis> results(sources.size());
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, sources.size()));
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < sources.size(); i += threads) {
      results[i] = beam_search(model, sources[i], visuals.empty() ? nullptr : visuals[i], options);
    }
  };
  if (threads == 1) {
    work(0);
    return results;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace mmt::decode
