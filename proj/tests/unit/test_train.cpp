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

#include <chrono>
#include <sstream>

#include "doctest.h"
#include "mmtlab/bpe.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/rng.hpp"
#include "mmtlab/train.hpp"

namespace tr = mmt::train;
namespace md = mmt::model;

namespace {

struct CopyTask {
  mmt::bpe::BpeModel bpe;
  std::vector<tr::Example> train, val;
  std::vector<std::string> val_refs;
};

CopyTask copy_task(std::size_t n_train, std::size_t n_val) {
  const std::vector<std::string> letters{"a", "b", "c", "d", "e", "f", "g", "h"};
  CopyTask t;
  t.bpe = mmt::bpe::learn_merges({letters}, 0);
  mmt::Rng rng(21);
  auto make = [&](std::size_t i) {
    std::vector<std::string> words;
    const auto n = 3 + rng.below(5);
    for (std::size_t k = 0; k < n; ++k) words.push_back(letters[rng.below(letters.size())]);
    const auto ids = t.bpe.encode(words);
    return std::pair{tr::Example{std::to_string(i), ids, ids, std::nullopt}, tr::ids_to_text(t.bpe, ids)};
  };
  for (std::size_t i = 0; i < n_train; ++i) t.train.push_back(make(i).first);
  for (std::size_t i = 0; i < n_val; ++i) {
    auto [ex, text] = make(1000 + i);
    t.val.push_back(ex);
    t.val_refs.push_back(text);
  }
  return t;
}

md::ModelConfig copy_config(const mmt::bpe::BpeModel& bpe) {
  md::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.model_dim = 32;
  c.ff_dim = 64;
  c.dropout = 0.0;
  c.max_len = 16;
  c.src_vocab = c.tgt_vocab = bpe.vocab_size();
  return c;
}

tr::TrainOptions copy_options(std::size_t epochs) {
  tr::TrainOptions o;
  o.max_epochs = epochs;
  o.patience = 50;
  o.batch_tokens = 96;
  o.schedule = {1.0, 32, 200};
  o.val_decode = {1, 1.0, 16, 1};
  o.seed = 3;
  return o;
}

}  // namespace

TEST_CASE("early stopping needs a strict improvement and stops after patience bad epochs") {
  tr::EarlyStopping es(2);
  const std::vector<double> scores{10, 11, 11, 10, 9};
  std::vector<bool> improved;
  for (double s : scores) {
    REQUIRE_FALSE(es.should_stop());
    improved.push_back(es.observe(s));
  }
  CHECK(improved == std::vector<bool>{true, true, false, false, false});
  CHECK(es.should_stop());
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_score() == 11);

  tr::EarlyStopping ten(10);
  ten.observe(5);
  for (int i = 0; i < 10; ++i) {
    ten.observe(5);
    CHECK_FALSE(ten.should_stop());
  }
  ten.observe(4);
  CHECK(ten.should_stop());
  CHECK(ten.best_epoch() == 1);
}

TEST_CASE("batches cover every example once, respect the budget and depend only on the seed") {
  const auto t = copy_task(100, 0);
  const auto a = tr::make_batches(t.train, 64, 5, 1);
  CHECK(a == tr::make_batches(t.train, 64, 5, 1));
  CHECK_FALSE(a == tr::make_batches(t.train, 64, 5, 2));
  std::vector<int> seen(100, 0);
  for (const auto& b : a) {
    std::size_t ms = 0, mt = 0;
    for (auto i : b) {
      ++seen[i];
      ms = std::max(ms, t.train[i].source.size());
      mt = std::max(mt, t.train[i].target.size());
    }
    if (b.size() > 1) CHECK(b.size() * (ms + mt + 1) <= 64);
  }
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("teacher forcing shifts the target around the boundary symbols") {
  const std::vector<int> a{5, 6}, b{7};
  const auto [in, out] = tr::teacher_forcing({&a, &b});
  CHECK(in.ids == std::vector<int>{1, 5, 6, 1, 7, 0});
  CHECK(out == std::vector<int>{5, 6, 2, 7, 2, -1});
}

TEST_CASE("training is bit-reproducible") {
  const auto t = copy_task(40, 8);
  auto c = copy_config(t.bpe);
  c.dropout = 0.1;
  const auto o = copy_options(2);
  const auto r1 = tr::train(c, t.train, t.val, t.val_refs, t.bpe, o);
  const auto r2 = tr::train(c, t.train, t.val, t.val_refs, t.bpe, o);
  REQUIRE(r1.log.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(r1.log[i].loss == r2.log[i].loss);
  CHECK(r1.best_params == r2.best_params);
}

TEST_CASE("a small model learns to copy") {
  const auto t = copy_task(200, 30);
  const auto start = std::chrono::steady_clock::now();
  std::size_t epochs = 0;
  const auto r = tr::train(copy_config(t.bpe), t.train, t.val, t.val_refs, t.bpe, copy_options(50),
                           [&](const tr::EpochRecord&) { ++epochs; });
  MESSAGE("copy task: best BLEU " << r.best_bleu << " at epoch " << r.best_epoch << " of " << epochs << " in "
                                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()
                                  << " s");
  CHECK(r.best_bleu >= 99.0);
  CHECK(r.log.front().loss > r.log.back().loss);
}

TEST_CASE("checkpoints round-trip as float32") {
  const auto t = copy_task(2, 0);
  auto c = copy_config(t.bpe);
  c.mode = md::Mode::AIF;
  c.visual_kind = mmt::features::VisualKind::Emb;
  c.visual_rows = 3;
  c.visual_dim = 4;
  const auto snap = md::snapshot(md::init_params(c, 4));
  std::stringstream ss;
  tr::save_checkpoint(ss, c, snap);
  const auto ck = tr::load_checkpoint(ss);
  CHECK(ck.config == c);
  REQUIRE(ck.params.size() == snap.size());
  for (const auto& [name, tensor] : snap) {
    const auto& back = ck.params.at(name);
    REQUIRE(back.shape() == tensor.shape());
    for (std::size_t i = 0; i < tensor.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(tensor[i])));
  }
  CHECK_NOTHROW(ck.instantiate());
  std::istringstream bad("mmtlab-checkpoint v9\n");
  CHECK_THROWS(tr::load_checkpoint(bad));
}

TEST_CASE("mismatched inputs are rejected") {
  const auto t = copy_task(10, 3);
  const auto c = copy_config(t.bpe);
  CHECK_THROWS_AS(tr::train(c, t.train, t.val, {"only one"}, t.bpe, copy_options(1)), mmt::Error);
  CHECK_THROWS_AS(tr::train(c, {}, t.val, t.val_refs, t.bpe, copy_options(1)), mmt::Error);
  auto with_visual = t.train;
  with_visual[0].visual = mmt::Tensor({1, 4});
  CHECK_THROWS_AS(tr::train(c, with_visual, t.val, t.val_refs, t.bpe, copy_options(1)), mmt::Error);
}

TEST_CASE("epoch records serialize as one JSON line") {
  const auto line = tr::to_json_line({3, 120, 1.5, 0.001, 42.25});
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"epoch\":3") != std::string::npos);
  CHECK(line.find("\"val_bleu\":42.25") != std::string::npos);
}
