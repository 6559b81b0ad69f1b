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

// Pre-norm transformer encoder-decoder with optional visual conditioning.
//
//   TextOnly  plain encoder-decoder.
//   AIC       a projected global feature vector is added to every row of the
//             final (normalized) encoder output.
//   AIF       every decoder layer gets an extra cross-attention sublayer over
//             the rows of a visual feature matrix, placed after the encoder
//             cross-attention.
//
// Every sublayer is x + dropout(sublayer(layer_norm(x))); the encoder and the
// decoder stacks end with a layer norm.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmtlab/autodiff.hpp"
#include "mmtlab/features.hpp"
#include "mmtlab/tensor.hpp"

namespace mmt::model {

using features::VisualKind;

enum class Mode { TextOnly, AIC, AIF };

Mode parse_mode(std::string_view name);
std::string_view mode_name(Mode mode);

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t model_dim = 128;
  std::size_t ff_dim = 256;
  double dropout = 0.1;
  Mode mode = Mode::TextOnly;
  VisualKind visual_kind = VisualKind::None;
  std::size_t max_len = 128;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  /// AIF: rows attended over and their width. AIC: visual_rows = 1 and
  /// visual_dim is the vector length.
  std::size_t visual_rows = 0;
  std::size_t visual_dim = 0;

  /// transformer_big geometry: 6 layers, 16 heads, width 1024.
  static ModelConfig transformer_big();

  /// Fills visual_rows/visual_dim for the mode and feature kind.
  void set_visual_geometry(const features::FeatureDims& dims);
  void validate() const;

  /// "key = value" lines, stable order.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

using ParamMap = std::map<std::string, ad::Var>;
using ParamSnapshot = std::map<std::string, Tensor>;

/// Parameter names and shapes the config requires, sorted by name.
std::vector<std::pair<std::string, Tensor::Shape>> parameter_shapes(const ModelConfig& config);

/// Glorot-uniform weights, unit gains, zero biases; deterministic in seed.
ParamMap init_params(const ModelConfig& config, std::uint64_t seed);
ParamSnapshot snapshot(const ParamMap& params);
ParamMap from_snapshot(const ParamSnapshot& snap);

/// Padded batch of id sequences, row-major batch x len.
struct Batch {
  std::size_t size = 0;
  std::size_t len = 0;
  std::vector<int> ids;
  std::vector<std::uint8_t> valid;
  std::vector<std::size_t> lengths;

  static Batch from(const std::vector<std::vector<int>>& sequences, int pad_id);
};

/// Per-forward dropout state. Each dropout site draws a fresh seed from
/// (seed, call counter), so a forward pass is reproducible.
class ForwardContext {
 public:
  static ForwardContext inference() { return ForwardContext(false, 0.0, 0); }
  ForwardContext(bool train, double rate, std::uint64_t seed) : train_(train), rate_(rate), seed_(seed) {}

  bool train() const noexcept { return train_; }
  ad::Var dropout(const ad::Var& x);

 private:
  bool train_;
  double rate_;
  std::uint64_t seed_;
  std::uint64_t calls_ = 0;
};

struct DecoderLayerAttention {
  std::shared_ptr<const Tensor> self;    // batch x heads x L_tgt x L_tgt
  std::shared_ptr<const Tensor> cross;   // batch x heads x L_tgt x L_src
  std::shared_ptr<const Tensor> visual;  // batch x heads x L_tgt x visual_rows (AIF)
};

struct AttentionTrace {
  std::vector<std::shared_ptr<const Tensor>> encoder;
  std::vector<DecoderLayerAttention> decoder;
};

/// Sinusoidal position encodings for positions [0, len).
Tensor positional_encoding(std::size_t len, std::size_t dim);

class Transformer {
 public:
  Transformer(ModelConfig config, ParamMap params);

  const ModelConfig& config() const noexcept { return config_; }
  ParamMap& params() noexcept { return params_; }
  const ParamMap& params() const noexcept { return params_; }
  const ad::Var& param(const std::string& name) const;

  /// Encoder memory, batch*len x model_dim.
  ad::Var encode(const Batch& source, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;

  /// memory rows of item b += visual_vector[b] * W + bias. visual_vectors is batch x visual_dim.
  ad::Var condition_aic(const ad::Var& memory, const ad::Var& visual_vectors, std::size_t source_len) const;

  /// Logits batch*len x tgt_vocab for a teacher-forced decoder input.
  /// visual: AIF -> batch*visual_rows x visual_dim rows; AIC -> batch x visual_dim
  /// (applied to the memory here); TextOnly -> must be empty.
  ad::Var decode_forward(const ad::Var& memory, const Batch& source, const std::optional<ad::Var>& visual,
                         const Batch& target_in, ForwardContext& ctx, AttentionTrace* trace = nullptr) const;

  /// Teacher-forced mean token cross entropy of target given source.
  ad::Var loss(const Batch& source, const std::optional<ad::Var>& visual, const Batch& target_in,
               const std::vector<int>& target_out, ForwardContext& ctx) const;

 private:
  ad::Var embed(const std::string& table, const Batch& batch, ForwardContext& ctx) const;
  ad::Var feed_forward(const std::string& prefix, const ad::Var& x) const;
  ad::AttentionOutput multi_head(const std::string& prefix, const ad::Var& queries_in, const ad::Var& kv_in,
                                 ad::AttentionLayout layout) const;
  ad::Var norm(const std::string& prefix, const ad::Var& x) const;

  ModelConfig config_;
  ParamMap params_;
};

/// Stacks visual matrices (one per batch item) into the model's visual input.
ad::Var stack_visual(const std::vector<const Tensor*>& per_item);

}  // namespace mmt::model
