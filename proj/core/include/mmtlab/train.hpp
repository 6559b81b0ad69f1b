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

// Training loop, early stopping and checkpoint files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mmtlab/bpe.hpp"
#include "mmtlab/decode.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/optim.hpp"
#include "mmtlab/tensor.hpp"

namespace mmt::train {

/// Tracks validation scores. An epoch improves only when its score is
/// strictly above the best so far; training should stop once more than
/// `patience` consecutive epochs fail to improve.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the score of the next epoch (1-based). Returns true if it is the new best.
  bool observe(double score);
  bool should_stop() const noexcept { return bad_epochs_ > patience_; }

  std::size_t epochs_seen() const noexcept { return epochs_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_score() const noexcept { return best_; }
  std::size_t bad_epochs() const noexcept { return bad_epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double best_ = 0.0;
};

/// One parallel sentence: BPE ids without specials plus its visual input
/// (the model input matrix, empty for text-only models).
struct Example {
  std::string segment_id;
  std::vector<int> source;
  std::vector<int> target;
  std::optional<Tensor> visual;
};

/// Splits example indices into batches whose padded source + target token
/// count stays within max_tokens (a single long example still forms a batch).
/// Order comes from a shuffle seeded by (seed, epoch).
std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples, std::size_t max_tokens,
                                                   std::uint64_t seed, std::size_t epoch);

struct TrainOptions {
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::size_t batch_tokens = 2048;
  optim::LrSchedule schedule{};
  optim::AdamHyper adam{};
  decode::DecodeOptions val_decode{1, 1.0, 64, 1};
  std::uint64_t seed = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;  // mean over the epoch's batches
  double lr = 0.0;    // rate used by the epoch's last step
  double val_bleu = 0.0;
};

struct TrainResult {
  model::ParamSnapshot best_params;
  std::size_t best_epoch = 0;
  double best_bleu = 0.0;
  std::vector<EpochRecord> log;
};

/// Teacher-forced inputs: [<s>] + target and target + [</s>] (-1 padding).
std::pair<model::Batch, std::vector<int>> teacher_forcing(const std::vector<const std::vector<int>*>& targets);

/// Mean token cross entropy of a batch of examples.
ad::Var batch_loss(const model::Transformer& model, const std::vector<Example>& examples,
                   const std::vector<std::size_t>& indices, model::ForwardContext& ctx);

/// Decodes examples and returns detokenized target sentences.
std::vector<std::string> translate_examples(const model::Transformer& model, const std::vector<Example>& examples,
                                            const bpe::BpeModel& target_bpe, const decode::DecodeOptions& options,
                                            std::vector<decode::Hypothesis>* hypotheses = nullptr);

/// Turns ids from the target BPE model back into a space-joined token line.
std::string ids_to_text(const bpe::BpeModel& target_bpe, const std::vector<int>& ids);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from init_params(config, seed) with Adam; validation BLEU is taken
/// after every epoch against val_references.
TrainResult train(const model::ModelConfig& config, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const std::vector<std::string>& val_references,
                  const bpe::BpeModel& target_bpe, const TrainOptions& options, const EpochCallback& on_epoch = {});

/// Line-delimited JSON for one epoch record.
std::string to_json_line(const EpochRecord& record);

// Checkpoint files: "mmtlab-checkpoint v1", the config text, "end-config",
// "tensors N", then per tensor a "name" line followed by its MMTF record.
// Values are stored as float32.

void save_checkpoint(std::ostream& out, const model::ModelConfig& config, const model::ParamSnapshot& params);
void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& config,
                     const model::ParamSnapshot& params);

struct Checkpoint {
  model::ModelConfig config;
  model::ParamSnapshot params;

  model::Transformer instantiate() const;
};

Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmt::train
