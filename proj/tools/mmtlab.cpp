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
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/pipeline.hpp"
#include "mmtlab/synth.hpp"

namespace fs = std::filesystem;
using namespace mmt;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> settings;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config, "experiment config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "override the config seed");
  sub->add_option("--out", args.out, "output directory");
  sub->add_option("--set", args.settings, "override a config value (key=value)");
  sub->add_option("--threads", args.threads, "decoding threads");
}

pipeline::ExperimentConfig load_config(const CommonArgs& args) {
  auto config = pipeline::ExperimentConfig::load(args.config);
  for (const auto& kv : args.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw FormatError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed) config.seed = *args.seed;
  if (args.threads) config.set("threads", std::to_string(*args.threads));
  if (!args.out.empty()) config.output_dir = fs::absolute(args.out);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmtlab: verb-masked multimodal translation experiments"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  CommonArgs args;
  auto* mask = app.add_subcommand("mask", "write masked source text for each variant");
  auto* learn_bpe = app.add_subcommand("learn-bpe", "learn source and target subword models");
  auto* encode = app.add_subcommand("encode", "encode every split into subword ids");
  auto* train = app.add_subcommand("train", "train one model per setup and variant");
  auto* translate = app.add_subcommand("translate", "decode the test set with every model");
  auto* evaluate = app.add_subcommand("evaluate", "score test translations (and optional human rankings)");
  auto* probe = app.add_subcommand("probe", "decode with reversed visual features");
  auto* run_all = app.add_subcommand("run-all", "run every stage and print the report");
  auto* report = app.add_subcommand("report", "print results, probe deltas and reference numbers");
  for (auto* sub : {mask, learn_bpe, encode, train, translate, evaluate, probe, run_all, report}) add_common(sub, args);

  std::string rankings;
  std::vector<std::string> systems;
  evaluate->add_option("--rankings", rankings, "ranking TSV: item, annotator, system, rank")->check(CLI::ExistingFile);
  evaluate->add_option("--systems", systems, "systems to score (default: all in the file)")->delimiter(',');
  eval::RankOptions rank_options;
  evaluate->add_flag("--count-all-zero", rank_options.count_all_zero_items,
                     "keep items where every rank is zero in the denominator");

  auto* synth = app.add_subcommand("synth", "write the constructed verb-from-feature dataset");
  std::string synth_out;
  synth::SynthOptions synth_options;
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->add_option("--seed", synth_options.seed, "generator seed");
  synth->add_option("--sentences", synth_options.n_sentences, "total sentences");
  synth->add_option("--val", synth_options.n_val, "validation sentences");
  synth->add_option("--test", synth_options.n_test, "test sentences");
  synth->add_option("--noise", synth_options.noise, "noise on videosum and conv4 patterns");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto data = synth::generate(synth_options);
      std::cout << synth::write_dataset(data, synth_options, synth_out).string() << '\n';
      return 0;
    }

    pipeline::Pipeline p(load_config(args), &std::cerr);
    if (mask->parsed()) p.run_mask();
    else if (learn_bpe->parsed()) p.run_bpe();
    else if (encode->parsed()) p.run_encode();
    else if (train->parsed()) p.run_train();
    else if (translate->parsed()) p.run_translate();
    else if (evaluate->parsed()) {
      p.run_evaluate().write_table(std::cout);
      if (!rankings.empty()) {
        std::ifstream in(rankings);
        const auto items = eval::read_rankings(in);
        if (systems.empty()) {
          std::set<std::string> seen;
          for (const auto& item : items)
            for (const auto& [s, r] : item.ranks) seen.insert(s);
          systems.assign(seen.begin(), seen.end());
        }
        const auto scores = eval::rank_score(items, systems, rank_options);
        std::cout << "\nhuman ranking (share of items ranked best or tied best)\n";
        for (const auto& s : systems) std::cout << std::left << std::setw(14) << s << pipeline::format_score(scores.scores.at(s)) << '\n';
        std::cout << "counted items: " << scores.counted << ", excluded (all ranks zero): " << scores.excluded << '\n';
      }
    } else if (probe->parsed()) {
      p.run_probe().write_table(std::cout);
    } else if (run_all->parsed()) {
      p.run_all();
      std::cout << p.report();
    } else if (report->parsed()) {
      std::cout << p.report();
    }
  } catch (const StageError& e) {
    std::cerr << "mmtlab: error " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mmtlab: error [config] " << e.what() << '\n';
    return 2;
  }
  return 0;
}
