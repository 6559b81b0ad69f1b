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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mmtlab/error.hpp"
#include "mmtlab/mmtf.hpp"
#include "mmtlab/pipeline.hpp"
#include "mmtlab/synth.hpp"

namespace fs = std::filesystem;
namespace pl = mmt::pipeline;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mmtlab_test_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny dataset; the returned config trains for a single epoch.
pl::ExperimentConfig tiny(const fs::path& dir) {
  mmt::synth::SynthOptions o;
  o.n_sentences = 40;
  o.n_val = 6;
  o.n_test = 6;
  const auto cfg_path = mmt::synth::write_dataset(mmt::synth::generate(o), o, dir / "data");
  auto cfg = pl::ExperimentConfig::load(cfg_path);
  cfg.set("max_epochs", "1");
  cfg.set("layers", "1");
  cfg.set("model_dim", "8");
  cfg.set("ff_dim", "8");
  cfg.set("beam_size", "2");
  cfg.output_dir = dir / "out";
  return cfg;
}

}  // namespace

TEST_CASE("config parsing resolves paths, strips comments and rejects unknown keys") {
  std::istringstream in("# comment\nseed = 5\nlexicon = lex.txt  # trailing\nsetups = text-only, AIF-emb\n"
                        "variants = ORG\nbeam_size = 3\nalpha = 0.6\n");
  auto cfg = pl::ExperimentConfig::parse(in, "/data/x");
  CHECK(cfg.seed == 5u);
  CHECK(cfg.lexicon == fs::path("/data/x/lex.txt"));
  CHECK(cfg.setups == std::vector<std::string>{"text-only", "AIF-emb"});
  CHECK(cfg.test_decode.beam_size == 3);
  CHECK(cfg.test_decode.alpha == 0.6);
  CHECK_THROWS_AS(cfg.set("beam", "3"), mmt::Error);
  CHECK_THROWS_AS(cfg.set("beam_size", "three"), mmt::Error);
  CHECK_THROWS_AS(cfg.set("setups", "AIF-bogus"), mmt::Error);
  const auto text = cfg.canonical_text();
  cfg.set("alpha", "0.7");
  CHECK(cfg.canonical_text() != text);
}

TEST_CASE("setup names") {
  CHECK(pl::parse_setup("AIF-conv4") == pl::Setup{"AIF-conv4", mmt::model::Mode::AIF, mmt::features::VisualKind::Conv4});
  CHECK(pl::parse_setup("text-only").mode == mmt::model::Mode::TextOnly);
  CHECK(pl::canonical_setups().size() == 5);
  CHECK_THROWS(pl::parse_setup("AIC-conv4"));
  CHECK(pl::format_score(44.126) == "44.13");
}

TEST_CASE("text-only ORG gives a one-cell table and no probe files") {
  const auto dir = work_dir("single");
  auto cfg = tiny(dir);
  cfg.set("setups", "text-only");
  cfg.set("variants", "ORG");
  pl::Pipeline p(cfg);
  p.run_all();
  const auto results = slurp(p.out("results.txt"));
  CHECK(results.find("text-only") != std::string::npos);
  CHECK(results.find("ACT") == std::string::npos);
  CHECK(fs::exists(p.out("hyps/text-only.ORG.txt")));
  CHECK_FALSE(fs::exists(p.out("probe.txt")));
  CHECK_FALSE(fs::exists(p.out("probe.jsonl")));
  fs::remove_all(dir);
}

TEST_CASE("runs are deterministic and resumable") {
  const auto dir = work_dir("repeat");
  auto cfg = tiny(dir);
  cfg.set("setups", "text-only,AIF-emb");
  cfg.set("variants", "ACT");
  auto first = cfg, second = cfg;
  first.output_dir = dir / "a";
  second.output_dir = dir / "b";
  pl::Pipeline(first).run_all();
  pl::Pipeline(second).run_all();
  for (const char* f : {"results.txt", "results.jsonl", "probe.txt", "probe.jsonl", "hyps/AIF-emb.ACT.txt",
                        "models/AIF-emb.ACT.ckpt"}) {
    INFO(f);
    CHECK(slurp(first.output_dir / f) == slurp(second.output_dir / f));
  }

  const auto stamp = fs::last_write_time(first.output_dir / "models/AIF-emb.ACT.ckpt");
  std::ostringstream log;
  pl::Pipeline(first, &log).run_all();
  CHECK(log.str().find("run train") == std::string::npos);
  CHECK(log.str().find("skip train/AIF-emb/ACT (done)") != std::string::npos);
  CHECK(fs::last_write_time(first.output_dir / "models/AIF-emb.ACT.ckpt") == stamp);

  // an interrupted run picks up at the first stage not recorded
  fs::remove(first.output_dir / "hyps/AIF-emb.ACT.txt");
  {
    std::ifstream in(first.output_dir / "manifest.tsv");
    std::string kept, line;
    while (std::getline(in, line))
      if (line.rfind("translate/AIF-emb", 0) != 0 && line.rfind("probe/AIF-emb", 0) != 0)
        kept += line + "\n";
    in.close();
    std::ofstream(first.output_dir / "manifest.tsv") << kept;
  }
  pl::Pipeline(first).run_all();
  CHECK(slurp(first.output_dir / "hyps/AIF-emb.ACT.txt") == slurp(second.output_dir / "hyps/AIF-emb.ACT.txt"));

  auto changed = first;
  changed.set("alpha", "0.5");
  CHECK_THROWS_AS(pl::Pipeline{changed}, mmt::StageError);
  fs::remove_all(dir);
}

TEST_CASE("missing visual features name the absent segment ids") {
  const auto dir = work_dir("missing");
  auto cfg = tiny(dir);
  const mmt::mmtf::FeatureFile full(cfg.videosum_features);
  std::vector<std::pair<std::string, mmt::Tensor>> kept;
  for (const auto& id : full.segment_ids())
    if (id != "syn-00036" && id != "syn-00038") kept.emplace_back(id, full.read(id));
  cfg.videosum_features = dir / "partial.mmtf";
  mmt::mmtf::write_feature_file(cfg.videosum_features, kept);
  pl::Pipeline p(cfg);
  try {
    p.visual_inputs(pl::parse_setup("AIC-videosum"), "test");
    FAIL("expected a StageError");
  } catch (const mmt::StageError& e) {
    CHECK(e.stage() == "features");
    CHECK(std::string(e.what()).find("syn-00036") != std::string::npos);
    CHECK(std::string(e.what()).find("syn-00038") != std::string::npos);
  }
  CHECK(p.visual_inputs(pl::parse_setup("AIC-videosum"), "train").size() == 28);
  fs::remove_all(dir);
}

TEST_CASE("reference numbers file") {
  const auto dir = work_dir("ref");
  std::ofstream(dir / "ref.tsv") << "# published numbers\nbleu\ttext-only\tORG\t55.9\nrank\tAIF-emb\tACT\t0.81\n";
  const auto ref = pl::ReferenceNumbers::load(dir / "ref.tsv");
  CHECK(ref.get("bleu", "text-only", "ORG") == 55.9);
  CHECK_FALSE(ref.get("bleu", "text-only", "ACT"));
  std::ofstream(dir / "bad.tsv") << "bleu\ttext-only\n";
  CHECK_THROWS(pl::ReferenceNumbers::load(dir / "bad.tsv"));
  fs::remove_all(dir);
}
