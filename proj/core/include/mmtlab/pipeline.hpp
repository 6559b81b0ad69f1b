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

// End-to-end experiment: masking x conditioning grid with persisted
// artifacts and a manifest of completed stages.
//
// Output layout under output_dir:
//   manifest.tsv                  completed stages and the config fingerprint
//   masked/<variant>.<split>.txt  masked source text
//   bpe/<variant>.bpe, bpe/target.bpe
//   encoded/<variant|target>.<split>.ids
//   models/<setup>.<variant>.ckpt, logs/<setup>.<variant>.jsonl
//   hyps/<setup>.<variant>.txt, hyps/<setup>.<variant>.incongruent.txt
//   results.txt, results.jsonl, probe.txt, probe.jsonl

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "mmtlab/bpe.hpp"
#include "mmtlab/features.hpp"
#include "mmtlab/masking.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/probe.hpp"
#include "mmtlab/train.hpp"

namespace mmt::pipeline {

/// A row of the results grid: conditioning mode plus feature kind.
struct Setup {
  std::string name;
  model::Mode mode = model::Mode::TextOnly;
  features::VisualKind kind = features::VisualKind::None;

  bool operator==(const Setup&) const = default;
};

/// "text-only", "AIC-videosum", "AIF-videosum", "AIF-conv4", "AIF-emb".
Setup parse_setup(std::string_view name);
const std::vector<std::string>& canonical_setups();
const std::vector<std::string>& canonical_variants();

inline constexpr std::string_view kSplits[] = {"train", "val", "test"};

struct ExperimentConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = "mmtlab-out";

  std::map<std::string, std::filesystem::path> source;  // split -> annotated TSV
  std::map<std::string, std::filesystem::path> target;  // split -> target text
  std::map<std::string, std::filesystem::path> ids;     // split -> segment ids
  std::filesystem::path lexicon;
  std::filesystem::path videosum_features;
  std::filesystem::path conv4_features;
  std::filesystem::path emb_features;       // ready emb matrices, or
  std::filesystem::path emb_posteriors;     // posterior vectors, combined with
  std::filesystem::path category_labels;    //   one label per line and
  std::filesystem::path label_embeddings;   //   a word-vector text table
  std::filesystem::path reference_numbers;

  features::FeatureDims dims{};
  std::vector<std::string> variants{"ORG", "ACT", "ALL"};
  std::vector<std::string> setups = canonical_setups();
  std::string placeholder{bpe::kDefaultPlaceholder};
  std::size_t source_merges = 20000;
  std::size_t target_merges = 20000;

  model::ModelConfig model{};
  train::TrainOptions training{};
  decode::DecodeOptions test_decode{10, 1.0, 64, 1};

  /// Applies one "key = value" setting. Throws on unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Reads a config file; relative paths resolve against its directory.
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig parse(std::istream& in, const std::filesystem::path& base_dir);

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  void validate() const;
  /// Canonical text of every setting that affects results.
  std::string canonical_text() const;
};

/// BLEU per (setup, variant); absent cells print as "-".
struct ResultsTable {
  std::vector<std::string> setups;
  std::vector<std::string> variants;
  std::map<std::pair<std::string, std::string>, double> cells;
  std::map<std::pair<std::string, std::string>, std::string> hypothesis_files;

  void write_table(std::ostream& out) const;
  void write_jsonl(std::ostream& out) const;
};

/// Stage bookkeeping. A stage is recorded after its artifacts are written.
class Manifest {
 public:
  Manifest(std::filesystem::path path, std::string fingerprint);

  bool done(const std::string& stage) const { return stages_.count(stage) > 0; }
  void mark(const std::string& stage);

 private:
  void save() const;

  std::filesystem::path path_;
  std::string fingerprint_;
  std::set<std::string> stages_;
};

class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config, std::ostream* log = nullptr);

  void run_mask();
  void run_bpe();
  void run_encode();
  void run_train();
  void run_translate();
  ResultsTable run_evaluate();
  probe::ProbeReport run_probe();
  /// Every stage, then results and probe files.
  void run_all();

  /// Results table, probe report and (when configured) reference numbers.
  std::string report() const;

  const ExperimentConfig& config() const noexcept { return config_; }
  std::filesystem::path out(const std::string& relative) const { return config_.output_dir / relative; }

  /// Model inputs for every segment of a split, in corpus order. Throws a
  /// StageError listing the segment ids missing from the feature file.
  std::vector<Tensor> visual_inputs(const Setup& setup, const std::string& split) const;
  /// Training examples for one cell and split, read from the encoded files.
  std::vector<train::Example> examples(const Setup& setup, const std::string& variant, const std::string& split) const;
  model::ModelConfig model_config(const Setup& setup, const std::string& variant) const;

 private:
  template <typename F>
  void stage(const std::string& name, F&& body);
  void note(const std::string& message) const;
  std::vector<std::string> segment_ids(const std::string& split) const;
  std::vector<std::string> reference_lines(const std::string& split) const;
  bpe::BpeModel load_bpe(const std::string& name) const;
  bool is_visual(const std::string& setup) const;

  ExperimentConfig config_;
  std::ostream* log_;
  Manifest manifest_;
};

/// Reference numbers file: "kind<TAB>setup<TAB>variant<TAB>value" with kind
/// one of bleu, delta, rank. Lines starting with '#' are comments.
struct ReferenceNumbers {
  std::map<std::tuple<std::string, std::string, std::string>, double> values;

  static ReferenceNumbers load(const std::filesystem::path& path);
  std::optional<double> get(const std::string& kind, const std::string& setup, const std::string& variant) const;
};

/// Fixed two-decimal formatting used in every report.
std::string format_score(double value);

}  // namespace mmt::pipeline
