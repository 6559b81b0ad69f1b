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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmtlab/bpe.hpp"
#include "mmtlab/decode.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/kernels.hpp"
#include "mmtlab/masking.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/pipeline.hpp"
#include "mmtlab/rng.hpp"
#include "mmtlab/synth.hpp"
#include "mmtlab/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace ad = mmt::ad;
namespace md = mmt::model;
using mmt::Tensor;

bool rank_score_throws_or_zero(const std::vector<mmt::eval::RankingItem>& items,
                               const std::vector<std::string>& systems);

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  Outcome& o;
  void operator()(bool ok, const std::string& what) {
    if (!ok) {
      if (o.pass) o.detail = what;
      o.pass = false;
    }
  }
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::setprecision(digits) << v;
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) { return mmt::eval::read_lines(p.string()); }

Tensor random(mmt::Rng& rng, Tensor::Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = scale * rng.normal();
  return t;
}

md::ModelConfig micro(md::Mode mode) {
  md::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.model_dim = 8;
  c.ff_dim = 16;
  c.dropout = 0.0;
  c.max_len = 12;
  c.src_vocab = c.tgt_vocab = 11;
  c.mode = mode;
  if (mode == md::Mode::AIC) {
    c.visual_kind = mmt::features::VisualKind::Videosum;
    c.visual_rows = 1;
    c.visual_dim = 6;
  } else if (mode == md::Mode::AIF) {
    c.visual_kind = mmt::features::VisualKind::Emb;
    c.visual_rows = 3;
    c.visual_dim = 5;
  }
  return c;
}

md::ParamMap perturbed(const md::ModelConfig& c, std::uint64_t seed) {
  auto params = md::init_params(c, seed);
  mmt::Rng rng(seed + 1);
  for (auto& [name, var] : params)
    for (double& v : var.mutable_value().storage()) v += 0.2 * rng.normal();
  return params;
}

// 1
Outcome gradient_integrity() {
  Outcome o;
  Check check{o};
  double worst = 0;
  std::size_t entries = 0;
  for (auto mode : {md::Mode::TextOnly, md::Mode::AIC, md::Mode::AIF}) {
    const auto c = micro(mode);
    const md::Transformer m(c, perturbed(c, 17));
    mmt::Rng rng(3);
    std::optional<ad::Var> vis;
    if (mode != md::Mode::TextOnly) vis = ad::constant(random(rng, {2 * c.visual_rows, c.visual_dim}));
    const auto src = md::Batch::from({{4, 5, 6, 2}, {7, 8, 2}}, 0);
    const auto tgt = md::Batch::from({{1, 9, 10, 4}, {1, 5, 6}}, 0);
    const std::vector<int> out{9, 10, 4, 2, 5, 6, 2, -1};
    auto ctx = md::ForwardContext::inference();
    ad::backward(m.loss(src, vis, tgt, out, ctx));
    auto f = [&] {
      ad::NoGradGuard g;
      auto cx = md::ForwardContext::inference();
      return m.loss(src, vis, tgt, out, cx).value()[0];
    };
    for (const auto& [name, var] : m.params()) {
      auto p = var;
      const Tensor analytic = p.grad();
      auto& x = p.mutable_value().storage();
      const auto numeric = oracle::numeric_gradient(f, x, 1e-6);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = oracle::relative_error(analytic[i], numeric[i]);
        worst = std::max(worst, e);
        ++entries;
        check(e <= 1e-4, std::string(md::mode_name(mode)) + " " + name + "[" + std::to_string(i) +
                             "] relative error " + fmt(e));
      }
    }
  }
  if (o.pass) o.detail = std::to_string(entries) + " entries, worst relative error " + fmt(worst, 3);
  return o;
}

// 2
Outcome bleu_oracle() {
  Outcome o;
  Check check{o};
  mmt::Rng rng(2024);
  std::vector<std::string> hyps, refs;
  auto sentence = [&] {
    std::string s;
    const auto n = 1 + rng.below(15);
    for (std::size_t i = 0; i < n; ++i) s += (i ? " t" : "t") + std::to_string(rng.below(8));
    return s;
  };
  for (int i = 0; i < 50; ++i) {
    refs.push_back(sentence());
    hyps.push_back(rng.uniform() < 0.2 ? refs.back() : sentence());
  }
  const double got = mmt::eval::bleu(hyps, refs), want = oracle::corpus_bleu(hyps, refs);
  check(std::abs(got - want) <= 1e-9, "bleu " + fmt(got, 17) + " vs oracle " + fmt(want, 17));
  check(got > 0.0, "degenerate randomized corpus");
  check(mmt::eval::bleu(refs, refs) == 100.0, "BLEU(h,h) != 100");
  check(mmt::eval::bleu(hyps, hyps) == 100.0, "BLEU(h,h) != 100");
  if (o.pass) o.detail = "BLEU " + fmt(got, 6) + ", |diff| " + fmt(std::abs(got - want), 2);
  return o;
}

// 3
Outcome masking_fidelity() {
  Outcome o;
  Check check{o};
  namespace mk = mmt::masking;
  auto sent = [](const std::string& text) {
    mk::AnnotatedSentence s;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
      const auto a = tok.find('/');
      if (a == std::string::npos) {
        s.tokens.push_back({tok, tok, mk::Pos::X});
      } else {
        const auto b = tok.find('/', a + 1);
        s.tokens.push_back({tok.substr(0, a), tok.substr(b + 1), mk::parse_pos(tok.substr(a + 1, b - a - 1))});
      }
    }
    return s;
  };
  auto join = [](const std::vector<std::string>& v) {
    std::string out;
    for (const auto& w : v) out += (out.empty() ? "" : " ") + w;
    return out;
  };
  std::istringstream lex_file("drawing\nrubbing\nfolding\nslipping\n");
  const auto lexicon = mk::read_lexicon(lex_file);
  const std::vector<std::array<std::string, 3>> cases{
      {"simply apply/VERB/apply the cleanser or cream to your hands and apply/VERB/apply it to the face and "
       "begin/VERB/begin rubbing/VERB/rub .",
       "simply apply the cleanser or cream to your hands and apply it to the face and begin <v> .",
       "simply <v> the cleanser or cream to your hands and <v> it to the face and <v> <v> ."},
      {"you can/AUX/can draw/VERB/draw it really lightly , go/VERB/go back and erase/VERB/erase it later .",
       "you can <v> it really lightly , go back and erase it later .",
       "you <v> <v> it really lightly , <v> back and <v> it later ."},
      {"what we are/AUX/be going/VERB/go to be/AUX/be doing/VERB/do is/AUX/be folding/VERB/fold the top over and "
       "making/VERB/make a little casing/VERB/case the ribbon will/AUX/will slip/VERB/slip through .",
       "what we are going to be doing is <v> the top over and making a little casing the ribbon will <v> through .",
       "what we <v> <v> to <v> <v> <v> <v> the top over and <v> a little <v> the ribbon <v> <v> through ."},
  };
  for (const auto& placeholder : {std::string("<v>"), std::string("[VERB]")}) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      auto expect = [&](std::string s) {
        for (std::size_t p = s.find("<v>"); p != std::string::npos; p = s.find("<v>", p + placeholder.size()))
          s.replace(p, 3, placeholder);
        return s;
      };
      const auto s = sent(cases[i][0]);
      check(join(mk::mask(s, mk::MaskVariant::Act, lexicon, placeholder)) == expect(cases[i][1]),
            "segment " + std::to_string(i + 1) + " ACT differs");
      check(join(mk::mask(s, mk::MaskVariant::All, lexicon, placeholder)) == expect(cases[i][2]),
            "segment " + std::to_string(i + 1) + " ALL differs");
      check(mk::mask(s, mk::MaskVariant::Org, lexicon, placeholder) == s.surfaces(), "ORG changed the text");
    }
  }
  if (o.pass) o.detail = "3 segments x ACT/ALL byte-exact, two placeholder strings";
  return o;
}

// 4
Outcome bpe_laws() {
  Outcome o;
  Check check{o};
  namespace bpe = mmt::bpe;
  mmt::Rng rng(99);
  const std::vector<std::string> alphabet{"a", "b", "c", "d", "e", "o", "r", "s", "t", "é", "ç"};
  std::vector<bpe::Sentence> corpus;
  for (int i = 0; i < 1000; ++i) {
    bpe::Sentence s;
    const auto n = 1 + rng.below(10);
    for (std::size_t k = 0; k < n; ++k) {
      if (rng.uniform() < 0.1) {
        s.push_back("<v>");
        continue;
      }
      std::string w;
      const auto len = 1 + rng.below(7);
      for (std::size_t j = 0; j < len; ++j) w += alphabet[rng.below(alphabet.size())];
      s.push_back(w);
    }
    corpus.push_back(s);
  }
  const auto a = bpe::learn_merges(corpus, 300);
  const auto b = bpe::learn_merges(corpus, 300);
  check(a == b, "two learning runs differ");
  for (std::size_t n : {0, 1, 50, 150}) {
    const auto prefix = bpe::learn_merges(corpus, n);
    for (std::size_t i = 0; i < prefix.merges().size(); ++i)
      check(prefix.merges()[i] == a.merges()[i], "merge list of " + std::to_string(n) + " is not a prefix");
    check(prefix.merges().size() == std::min(n, a.merges().size()), "merge count");
  }
  for (const auto& s : corpus) {
    const auto sub = a.apply(s);
    check(a.detokenize(sub) == s, "apply/detokenize identity broken");
    check(std::count(sub.begin(), sub.end(), "<v>") == std::count(s.begin(), s.end(), "<v>"), "placeholder split");
  }
  for (const auto& [l, r] : a.merges())
    check(l.find("<v>") == std::string::npos && r.find("<v>") == std::string::npos, "merge touches placeholder");
  if (o.pass) o.detail = "1000 sentences, " + std::to_string(a.merges().size()) + " merges";
  return o;
}

// 5
Outcome shapes_and_normalization() {
  Outcome o;
  Check check{o};
  namespace ft = mmt::features;
  const ft::FeatureDims full;
  mmt::Rng rng(5);
  double worst = 0;
  auto check_rows = [&](const std::shared_ptr<const Tensor>& w, const std::string& what) {
    check(w != nullptr, what + " not recorded");
    if (!w) return;
    const auto len = w->shape().back();
    for (std::size_t r = 0; r < w->size() / len; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < len; ++j) s += (*w)[r * len + j];
      worst = std::max(worst, std::abs(s - 1.0));
      check(std::abs(s - 1.0) <= 1e-6, what + " row does not sum to 1");
    }
  };
  std::map<std::string, std::size_t> columns;
  for (auto [kind, name, expect] : std::vector<std::tuple<ft::VisualKind, std::string, std::size_t>>{
           {ft::VisualKind::Conv4, "conv4", 49}, {ft::VisualKind::Emb, "emb", 339}, {ft::VisualKind::Videosum, "videosum", 32}}) {
    auto c = md::ModelConfig::transformer_big();
    c.mode = md::Mode::AIF;
    c.visual_kind = kind;
    c.n_layers = 1;
    c.model_dim = 64;
    c.ff_dim = 64;
    c.src_vocab = c.tgt_vocab = 12;
    c.set_visual_geometry(full);
    const md::Transformer m(c, md::init_params(c, 1));
    Tensor raw;
    if (kind == ft::VisualKind::Conv4) raw = random(rng, {7, 7, full.conv4_channels});
    if (kind == ft::VisualKind::Emb) raw = random(rng, {full.emb_categories, full.emb_dim});
    if (kind == ft::VisualKind::Videosum) raw = random(rng, {full.videosum_dim});
    const Tensor input = ft::model_input(ft::from_raw(kind, raw, full), full, true);
    ad::NoGradGuard g;
    auto ctx = md::ForwardContext::inference();
    md::AttentionTrace trace;
    const auto src = md::Batch::from({{4, 5, 6, 2}, {7, 2}}, 0);
    const auto tgt = md::Batch::from({{1, 8, 9}, {1, 10}}, 0);
    auto mem = m.encode(src, ctx, &trace);
    m.decode_forward(mem, src, ad::constant(md::stack_visual({&input, &input}).value()), tgt, ctx, &trace);
    const auto& vis = trace.decoder.at(0).visual;
    columns[name] = vis ? vis->shape().back() : 0;
    check(columns[name] == expect, name + " has " + std::to_string(columns[name]) + " visual columns");
    check_rows(vis, name + " visual attention");
    check_rows(trace.decoder.at(0).self, "self attention");
    check_rows(trace.decoder.at(0).cross, "cross attention");
    check_rows(trace.encoder.at(0), "encoder attention");
  }

  auto ca = micro(md::Mode::AIC);
  auto params = perturbed(ca, 4);
  params.at("aic.b").mutable_value().fill(0.0);
  const md::Transformer aic(ca, params);
  auto ct = micro(md::Mode::TextOnly);
  auto text_params = params;
  text_params.erase("aic.w");
  text_params.erase("aic.b");
  const md::Transformer text(ct, text_params);
  ad::NoGradGuard g;
  auto ctx = md::ForwardContext::inference();
  const auto src = md::Batch::from({{4, 5, 2}, {6, 7, 8, 2}}, 0);
  const auto tgt = md::Batch::from({{1, 3}, {1, 4, 5}}, 0);
  const auto a = aic.decode_forward(aic.encode(src, ctx), src, ad::constant(Tensor({2, 6})), tgt, ctx).value();
  const auto t = text.decode_forward(text.encode(src, ctx), src, std::nullopt, tgt, ctx).value();
  check(a == t, "AIC with zero feature and bias differs from text-only");
  if (o.pass)
    o.detail = "columns conv4 " + std::to_string(columns["conv4"]) + ", emb " + std::to_string(columns["emb"]) +
               ", videosum " + std::to_string(columns["videosum"]) + "; max |row sum - 1| " + fmt(worst, 2) +
               "; AIC zero bit-equal";
  return o;
}

// 6
Outcome beam_correctness() {
  Outcome o;
  Check check{o};
  namespace dc = mmt::decode;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto c = micro(md::Mode::TextOnly);
    c.n_layers = 1;
    const md::Transformer m(c, perturbed(c, seed * 31));
    const std::vector<int> source{4 + static_cast<int>(seed % 5), 6, 7, 2};
    const auto beam = dc::beam_search(m, source, nullptr, {1, 1.0, 10, 1});
    const auto greedy = dc::greedy_search(dc::model_scorer(m, source, nullptr), mmt::bpe::kEosId, 10, 1.0);
    check(beam == greedy, "beam 1 differs from greedy for seed " + std::to_string(seed));
  }

  // three steps over {</s>=0, x=1, y=2}; rows are indexed by the prefix
  const std::map<std::vector<int>, std::vector<double>> table{
      {{}, {0.10, 0.60, 0.30}},       {{1}, {0.20, 0.40, 0.40}},       {{2}, {0.70, 0.20, 0.10}},
      {{1, 1}, {0.50, 0.25, 0.25}},   {{1, 2}, {0.05, 0.05, 0.90}},    {{2, 1}, {0.30, 0.30, 0.40}},
      {{2, 2}, {0.60, 0.20, 0.20}},   {{1, 1, 1}, {1, 0, 0}},          {{1, 1, 2}, {1, 0, 0}},
      {{1, 2, 1}, {1, 0, 0}},         {{1, 2, 2}, {1, 0, 0}},          {{2, 1, 1}, {1, 0, 0}},
      {{2, 1, 2}, {1, 0, 0}},         {{2, 2, 1}, {1, 0, 0}},          {{2, 2, 2}, {1, 0, 0}}};
  dc::StepScorer scorer = [&](const std::vector<std::vector<int>>& prefixes) {
    std::vector<std::vector<double>> rows;
    for (const auto& p : prefixes) {
      std::vector<double> row;
      for (double q : table.at(p)) row.push_back(std::log(q));
      rows.push_back(row);
    }
    return rows;
  };
  for (double alpha : {0.0, 0.6, 1.0, 2.0}) {
    // exhaustive: every sequence ending in </s> within 4 steps
    std::vector<std::pair<std::vector<int>, double>> complete;
    std::function<void(std::vector<int>, double)> walk = [&](std::vector<int> p, double lp) {
      const auto it = table.find(p);
      if (it == table.end()) return;
      for (int v = 0; v < 3; ++v) {
        if (it->second[static_cast<std::size_t>(v)] == 0.0) continue;
        auto q = p;
        q.push_back(v);
        const double l = lp + std::log(it->second[static_cast<std::size_t>(v)]);
        if (v == 0) complete.emplace_back(q, l);
        else walk(q, l);
      }
    };
    walk({}, 0.0);
    std::vector<int> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (const auto& [seq, lp] : complete) {
      const double s = lp / dc::length_penalty(seq.size(), alpha);
      if (s > best_score) {
        best_score = s;
        best = seq;
      }
    }
    for (std::size_t beam : {9, 27}) {
      const auto h = dc::beam_search(scorer, 0, {beam, alpha, 4});
      check(h.finished && h.tokens == best, "beam " + std::to_string(beam) + " alpha " + fmt(alpha) +
                                                 " disagrees with enumeration");
      check(std::abs(h.score - best_score) <= 1e-12, "score differs from enumeration");
    }
    if (alpha == 0.0) {
      double best_lp = -std::numeric_limits<double>::infinity();
      for (const auto& [seq, lp] : complete) best_lp = std::max(best_lp, lp);
      check(best_score == best_lp, "alpha 0 ranking is not the log-probability ranking");
      for (const auto& [seq, lp] : complete)
        check(lp / dc::length_penalty(seq.size(), 0.0) == lp, "alpha 0 rescales scores");
    }
  }
  if (o.pass) o.detail = "20 models beam1==greedy; 3-step table matches enumeration for alpha 0/0.6/1/2";
  return o;
}

// 7
Outcome directional_probe(const fs::path& work) {
  Outcome o;
  Check check{o};
  mmt::synth::SynthOptions so;
  const auto data = mmt::synth::generate(so);
  const auto cfg_path = mmt::synth::write_dataset(data, so, work / "synth");
  auto cfg = mmt::pipeline::ExperimentConfig::load(cfg_path);
  cfg.set("setups", "text-only,AIF-emb");
  cfg.set("variants", "ACT,ALL");
  cfg.set("max_epochs", "30");
  cfg.set("batch_tokens", "512");
  cfg.output_dir = work / "synth-run";
  fs::remove_all(cfg.output_dir);

  std::set<std::string> vocab;
  for (const auto& [split, s] : data.splits)
    for (const auto& sent : s.source)
      for (const auto& t : sent.tokens) vocab.insert(t.surface);

  mmt::pipeline::Pipeline(cfg).run_all();

  const auto& gold = data.splits.at("test").verb;
  std::map<std::size_t, std::size_t> freq;
  for (auto v : gold) ++freq[v];
  std::size_t top = 0;
  for (const auto& [v, n] : freq) top = std::max(top, n);
  const double majority = 100.0 * static_cast<double>(top) / static_cast<double>(gold.size());
  const double chance = 100.0 / static_cast<double>(mmt::synth::verbs().size());
  std::ostringstream detail;
  detail << "source vocab " << vocab.size() << ", chance " << fmt(chance, 3) << ", majority " << fmt(majority, 3);
  for (const std::string variant : {"ACT", "ALL"}) {
    auto acc = [&](const std::string& file) {
      return 100.0 * mmt::synth::masked_verb_accuracy(lines_of(cfg.output_dir / "hyps" / file), gold);
    };
    const double cong = acc("AIF-emb." + variant + ".txt");
    const double incong = acc("AIF-emb." + variant + ".incongruent.txt");
    const double text = acc("text-only." + variant + ".txt");
    detail << "; " << variant << " congruent " << fmt(cong, 4) << " incongruent " << fmt(incong, 4)
           << " text-only " << fmt(text, 4);
    check(cong >= 95.0, variant + ": congruent accuracy " + fmt(cong, 4) + " < 95");
    check(incong <= chance + 10.0, variant + ": incongruent accuracy " + fmt(incong, 4) + " > chance + 10");
    check(text <= majority + 10.0, variant + ": text-only accuracy " + fmt(text, 4) + " > majority + 10");
  }
  o.detail = o.pass ? detail.str() : o.detail + " (" + detail.str() + ")";
  return o;
}

// 8
Outcome ranking_scorer() {
  Outcome o;
  Check check{o};
  mmt::Rng rng(8);
  std::size_t zero_items = 0, tie_items = 0;
  for (int set = 0; set < 100; ++set) {
    const std::size_t n_sys = 2 + rng.below(3);
    std::vector<std::string> systems;
    for (std::size_t s = 0; s < n_sys; ++s) systems.push_back("sys" + std::to_string(s));
    std::vector<mmt::eval::RankingItem> items;
    std::vector<std::map<std::string, int>> raw;
    const auto n_items = 1 + rng.below(40);
    for (std::size_t i = 0; i < n_items; ++i) {
      std::map<std::string, int> ranks;
      const bool all_zero = rng.uniform() < 0.1;
      for (const auto& s : systems) ranks[s] = all_zero ? 0 : static_cast<int>(rng.below(4));
      std::set<int> distinct;
      for (const auto& [s, r] : ranks) distinct.insert(r);
      zero_items += all_zero;
      tie_items += distinct.size() < ranks.size();
      items.push_back({std::to_string(i), "ann" + std::to_string(rng.below(3)), ranks});
      raw.push_back(ranks);
    }
    const auto credit = oracle::rank_scores(raw, systems);
    std::size_t counted = 0;
    for (const auto& r : raw) {
      bool any = false;
      for (const auto& [s, v] : r) any |= v != 0;
      counted += any;
    }
    if (counted == 0) {
      check(rank_score_throws_or_zero(items, systems), "all-zero set handled inconsistently");
      continue;
    }
    const auto got = mmt::eval::rank_score(items, systems);
    check(got.counted == counted && got.excluded == n_items - counted, "counted/excluded mismatch");
    for (const auto& s : systems)
      check(std::abs(got.scores.at(s) - credit.at(s)) <= 1e-12,
            "set " + std::to_string(set) + " " + s + " differs from brute force");
  }
  if (o.pass)
    o.detail = "100 sets, " + std::to_string(tie_items) + " items with ties, " + std::to_string(zero_items) +
               " all-zero items";
  return o;
}

// 9
Outcome early_stopping() {
  Outcome o;
  Check check{o};
  // scripted sequences: expected (stop epoch, best epoch); stop 0 means never
  struct Script {
    std::vector<double> scores;
    std::size_t stop;
    std::size_t best;
  };
  std::vector<Script> scripts;
  {
    std::vector<double> s{10, 20, 30};
    for (int i = 0; i < 11; ++i) s.push_back(30);
    scripts.push_back({s, 14, 3});
  }
  {
    std::vector<double> s{5};
    for (int i = 0; i < 10; ++i) s.push_back(4);
    s.push_back(6);
    for (int i = 0; i < 11; ++i) s.push_back(1);
    scripts.push_back({s, 23, 12});
  }
  {
    std::vector<double> s;
    for (int i = 0; i < 40; ++i) s.push_back(i);
    scripts.push_back({s, 0, 40});
  }
  {
    // the first epoch is always kept, even at BLEU 0
    std::vector<double> s(12, 0.0);
    scripts.push_back({s, 12, 1});
  }
  for (std::size_t k = 0; k < scripts.size(); ++k) {
    mmt::train::EarlyStopping es(10);
    std::size_t stopped = 0;
    for (double s : scripts[k].scores) {
      es.observe(s);
      if (es.should_stop()) {
        stopped = es.epochs_seen();
        break;
      }
    }
    check(stopped == scripts[k].stop, "script " + std::to_string(k + 1) + " stopped at " + std::to_string(stopped));
    check(es.best_epoch() == scripts[k].best, "script " + std::to_string(k + 1) + " best epoch");
  }

  // checkpoint selection: the kept parameters are the best epoch's
  namespace bpe = mmt::bpe;
  const std::vector<std::string> letters{"a", "b", "c", "d", "e", "f"};
  const auto model_bpe = bpe::learn_merges({letters}, 0);
  mmt::Rng rng(4);
  std::vector<mmt::train::Example> train, val;
  std::vector<std::string> refs;
  for (int i = 0; i < 80; ++i) {
    bpe::Sentence s;
    for (std::size_t k = 0, n = 2 + rng.below(4); k < n; ++k) s.push_back(letters[rng.below(letters.size())]);
    const auto ids = model_bpe.encode(s);
    if (i < 60) {
      train.push_back({std::to_string(i), ids, ids, std::nullopt});
    } else {
      val.push_back({std::to_string(i), ids, ids, std::nullopt});
      refs.push_back(mmt::train::ids_to_text(model_bpe, ids));
    }
  }
  md::ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.model_dim = 16;
  c.ff_dim = 32;
  c.max_len = 10;
  c.src_vocab = c.tgt_vocab = model_bpe.vocab_size();
  mmt::train::TrainOptions opt;
  opt.max_epochs = 300;
  opt.patience = 10;
  opt.batch_tokens = 64;
  opt.schedule = {0.5, 16, 50};
  opt.val_decode = {1, 1.0, 10, 1};
  const auto r = mmt::train::train(c, train, val, refs, model_bpe, opt);
  std::size_t argmax = 0;
  for (std::size_t i = 0; i < r.log.size(); ++i)
    if (r.log[i].val_bleu > r.log[argmax].val_bleu) argmax = i;
  check(r.best_epoch == argmax + 1, "best epoch is not the first maximum of validation BLEU");
  check(r.best_bleu == r.log[argmax].val_bleu, "best BLEU mismatch");
  if (r.log.size() < opt.max_epochs) check(r.log.size() == r.best_epoch + 11, "did not stop 11 epochs after the best");
  const md::Transformer best(c, md::from_snapshot(r.best_params));
  const auto hyps = mmt::train::translate_examples(best, val, model_bpe, opt.val_decode);
  check(mmt::eval::bleu(hyps, refs) == r.best_bleu, "kept parameters do not reproduce the best validation BLEU");
  if (o.pass)
    o.detail = "4 scripts; training kept epoch " + std::to_string(r.best_epoch) + " (BLEU " + fmt(r.best_bleu, 4) +
               ") and stopped after " + std::to_string(r.log.size()) + " epochs";
  return o;
}

// 10
Outcome pipeline_determinism(const fs::path& work) {
  Outcome o;
  Check check{o};
  mmt::synth::SynthOptions so;
  so.n_sentences = 160;
  so.n_val = 20;
  so.n_test = 20;
  const auto cfg_path = mmt::synth::write_dataset(mmt::synth::generate(so), so, work / "det-data");
  auto base = mmt::pipeline::ExperimentConfig::load(cfg_path);
  base.set("setups", "text-only,AIC-videosum,AIF-videosum,AIF-conv4,AIF-emb");
  base.set("variants", "ORG,ACT");
  base.set("max_epochs", "2");
  base.set("beam_size", "3");
  std::vector<fs::path> dirs{work / "det-a", work / "det-b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    auto cfg = base;
    cfg.output_dir = d;
    mmt::pipeline::Pipeline(cfg).run_all();
  }
  for (const char* f : {"results.txt", "results.jsonl", "probe.txt", "probe.jsonl"}) {
    const auto a = slurp(dirs[0] / f), b = slurp(dirs[1] / f);
    check(!a.empty(), std::string(f) + " is empty");
    check(a == b, std::string(f) + " differs between runs");
  }
  if (o.pass) o.detail = "results and probe reports byte-identical (5 setups x 2 variants)";
  return o;
}

}  // namespace

// rank_score on a set with nothing to count: the scorer either throws or
// returns zero for every system
bool rank_score_throws_or_zero(const std::vector<mmt::eval::RankingItem>& items,
                               const std::vector<std::string>& systems) {
  try {
    const auto r = mmt::eval::rank_score(items, systems);
    for (const auto& [s, v] : r.scores)
      if (v != 0.0) return false;
    return r.counted == 0;
  } catch (const mmt::Error&) {
    return true;
  }
}

int main(int argc, char** argv) {
  CLI::App app{"mmtlab acceptance criteria"};
  fs::path work = fs::temp_directory_path() / "mmtlab-acceptance";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  struct Criterion {
    int id;
    std::string name;
    double limit_s;  // 0: no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient integrity", 60, gradient_integrity},
      {2, "BLEU oracle equivalence", 5, bleu_oracle},
      {3, "masking fidelity", 0, masking_fidelity},
      {4, "BPE laws", 0, bpe_laws},
      {5, "shape/normalization suite", 0, shapes_and_normalization},
      {6, "beam-search correctness", 0, beam_correctness},
      {7, "directional incongruence", 1800, [&] { return directional_probe(work); }},
      {8, "ranking scorer", 0, ranking_scorer},
      {9, "early-stopping rule", 0, early_stopping},
      {10, "pipeline determinism", 0, [&] { return pipeline_determinism(work); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0 && secs >= c.limit_s) {
      out.pass = false;
      out.detail += "; runtime " + fmt(secs, 4) + " s exceeds " + fmt(c.limit_s, 4) + " s";
    }
    failures += !out.pass;
    std::cout << "criterion " << c.id << ": " << (out.pass ? "PASS" : "FAIL") << "  " << c.name << "  ("
              << std::fixed << std::setprecision(1) << secs << " s)  " << out.detail << std::endl;
    std::cout.unsetf(std::ios::fixed);
  }
  return failures == 0 ? 0 : 1;
}
