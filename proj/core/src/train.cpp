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

#include "mmtlab/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/mmtf.hpp"
#include "mmtlab/rng.hpp"

namespace mmt::train {

namespace {

constexpr std::string_view kCheckpointMagic = "mmtlab-checkpoint v1";

std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(std::string("checkpoint truncated before ") + what);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

bool EarlyStopping::observe(double score) {
  ++epochs_;
  if (best_epoch_ == 0 || score > best_) {
    best_ = score;
    best_epoch_ = epochs_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<Example>& examples, std::size_t max_tokens,
                                                   std::uint64_t seed, std::size_t epoch) {
  if (max_tokens == 0) throw Error("batch token budget must be positive");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order.begin(), order.end());

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t src_len = 0, tgt_len = 0;
  for (std::size_t i : order) {
    const std::size_t s = std::max(src_len, examples[i].source.size());
    const std::size_t t = std::max(tgt_len, examples[i].target.size() + 1);
    if (!current.empty() && (current.size() + 1) * (s + t) > max_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      src_len = examples[i].source.size();
      tgt_len = examples[i].target.size() + 1;
    } else {
      src_len = s;
      tgt_len = t;
    }
    current.push_back(i);
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::pair<model::Batch, std::vector<int>> teacher_forcing(const std::vector<const std::vector<int>*>& targets) {
  std::vector<std::vector<int>> inputs;
  inputs.reserve(targets.size());
  for (const auto* t : targets) {
    std::vector<int> in{bpe::kBosId};
    in.insert(in.end(), t->begin(), t->end());
    inputs.push_back(std::move(in));
  }
  auto batch = model::Batch::from(inputs, bpe::kPadId);
  std::vector<int> out(batch.size * batch.len, -1);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = *targets[i];
    for (std::size_t k = 0; k < t.size(); ++k) out[i * batch.len + k] = t[k];
    out[i * batch.len + t.size()] = bpe::kEosId;
  }
  return {std::move(batch), std::move(out)};
}

ad::Var batch_loss(const model::Transformer& model, const std::vector<Example>& examples,
                   const std::vector<std::size_t>& indices, model::ForwardContext& ctx) {
  std::vector<std::vector<int>> sources;
  std::vector<const std::vector<int>*> targets;
  std::vector<const Tensor*> visuals;
  for (std::size_t i : indices) {
    const auto& ex = examples.at(i);
    sources.push_back(ex.source);
    targets.push_back(&ex.target);
    if (ex.visual) visuals.push_back(&*ex.visual);
  }
  if (!visuals.empty() && visuals.size() != indices.size()) throw Error("batch mixes examples with and without features");
  const auto source = model::Batch::from(sources, bpe::kPadId);
  auto [target_in, target_out] = teacher_forcing(targets);
  std::optional<ad::Var> visual;
  if (!visuals.empty()) visual = model::stack_visual(visuals);
  return model.loss(source, visual, target_in, target_out, ctx);
}

std::string ids_to_text(const bpe::BpeModel& target_bpe, const std::vector<int>& ids) {
  const auto tokens = target_bpe.decode(ids);
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> translate_examples(const model::Transformer& model, const std::vector<Example>& examples,
                                            const bpe::BpeModel& target_bpe, const decode::DecodeOptions& options,
                                            std::vector<decode::Hypothesis>* hypotheses) {
  std::vector<std::vector<int>> sources;
  std::vector<const Tensor*> visuals;
  bool any_visual = false;
  for (const auto& ex : examples) {
    sources.push_back(ex.source);
    visuals.push_back(ex.visual ? &*ex.visual : nullptr);
    any_visual = any_visual || ex.visual.has_value();
  }
  if (!any_visual) visuals.clear();
  auto hyps = decode::translate(model, sources, visuals, options);
  std::vector<std::string> lines;
  lines.reserve(hyps.size());
  for (const auto& h : hyps) lines.push_back(ids_to_text(target_bpe, h.tokens));
  if (hypotheses) *hypotheses = std::move(hyps);
  return lines;
}

TrainResult train(const model::ModelConfig& config, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const std::vector<std::string>& val_references,
                  const bpe::BpeModel& target_bpe, const TrainOptions& options, const EpochCallback& on_epoch) {
  if (train_set.empty()) throw Error("training set is empty");
  if (val_set.empty()) throw Error("validation set is empty");
  if (val_references.size() != val_set.size()) throw Error("validation references do not match the validation set");
  const bool visual_mode = config.mode != model::Mode::TextOnly;
  for (const auto* set : {&train_set, &val_set}) {
    for (const auto& ex : *set) {
      if (ex.visual.has_value() != visual_mode) {
        throw Error("segment '" + ex.segment_id + "': " +
                    (visual_mode ? "missing visual features" : "visual features given to a text-only model"));
      }
    }
  }

  model::Transformer model(config, model::init_params(config, options.seed));
  optim::Adam adam(options.adam);
  EarlyStopping stopper(options.patience);
  TrainResult result;
  std::int64_t step = 0;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto batches = make_batches(train_set, options.batch_tokens, options.seed, epoch);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (const auto& batch : batches) {
      ++step;
      lr = optim::lr_at(options.schedule, step);
      model::ForwardContext ctx(true, config.dropout, mix_seed(options.seed, static_cast<std::uint64_t>(step)));
      auto loss = batch_loss(model, train_set, batch, ctx);
      ad::backward(loss);
      adam.step(model.params(), lr);
      for (auto& [name, p] : model.params()) p.zero_grad();
      loss_sum += loss.value()[0];
    }

    const auto hyps = translate_examples(model, val_set, target_bpe, options.val_decode);
    EpochRecord record{epoch, static_cast<std::size_t>(step), loss_sum / static_cast<double>(batches.size()), lr,
                       eval::bleu(hyps, val_references)};
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stopper.observe(record.val_bleu)) {
      result.best_params = model::snapshot(model.params());
      result.best_epoch = epoch;
      result.best_bleu = record.val_bleu;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["lr"] = r.lr;
  j["val_bleu"] = r.val_bleu;
  return j.dump();
}

void save_checkpoint(std::ostream& out, const model::ModelConfig& config, const model::ParamSnapshot& params) {
  const auto shapes = model::parameter_shapes(config);
  if (shapes.size() != params.size()) throw Error("checkpoint parameters do not match the config");
  out << kCheckpointMagic << '\n' << config.to_text() << "end-config\n" << "tensors " << params.size() << '\n';
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != shape) throw Error("parameter '" + name + "' has the wrong shape");
    out << name << '\n';
    mmtf::write_record(out, it->second);
  }
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& config,
                     const model::ParamSnapshot& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  save_checkpoint(out, config, params);
}

Checkpoint load_checkpoint(std::istream& in) {
  if (read_line(in, "header") != kCheckpointMagic) throw FormatError("not an mmtlab checkpoint");
  std::string config_text;
  for (std::string line = read_line(in, "config"); line != "end-config"; line = read_line(in, "config")) {
    config_text += line + '\n';
  }
  Checkpoint ck;
  ck.config = model::ModelConfig::from_text(config_text);
  ck.config.validate();
  const auto count_line = read_line(in, "tensor count");
  std::size_t count = 0;
  if (std::sscanf(count_line.c_str(), "tensors %zu", &count) != 1) throw FormatError("bad tensor count line");
  for (std::size_t i = 0; i < count; ++i) {
    auto name = read_line(in, "tensor name");
    ck.params.emplace(std::move(name), mmtf::read_record(in));
  }
  const auto shapes = model::parameter_shapes(ck.config);
  if (shapes.size() != ck.params.size()) throw FormatError("checkpoint tensors do not match its config");
  for (const auto& [name, shape] : shapes) {
    auto it = ck.params.find(name);
    if (it == ck.params.end()) throw FormatError("checkpoint is missing parameter '" + name + "'");
    if (it->second.shape() != shape) throw FormatError("checkpoint parameter '" + name + "' has the wrong shape");
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

model::Transformer Checkpoint::instantiate() const { return model::Transformer(config, model::from_snapshot(params)); }

}  // namespace mmt::train
