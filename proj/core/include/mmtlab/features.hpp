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

// Visual feature constructions: chunk-averaged videosum vectors, conv4
// region grids and posterior-scaled category embeddings.

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mmtlab/tensor.hpp"

namespace mmt::features {

enum class VisualKind { None, Videosum, Conv4, Emb };

VisualKind parse_visual_kind(std::string_view name);
std::string_view visual_kind_name(VisualKind kind);

/// Feature geometry. Defaults are the full-size values; small dimensions are
/// used for desk-scale experiments.
struct FeatureDims {
  std::size_t videosum_dim = 2048;
  std::size_t videosum_rows = 32;  // attention rows after reshaping
  std::size_t conv4_grid = 7;      // grid is conv4_grid x conv4_grid cells
  std::size_t conv4_channels = 2048;
  std::size_t emb_categories = 339;
  std::size_t emb_dim = 300;

  std::size_t conv4_regions() const { return conv4_grid * conv4_grid; }
  std::size_t videosum_cols() const { return videosum_dim / videosum_rows; }
  void validate() const;
};

struct Videosum {
  Tensor vector;  // [videosum_dim]
};

struct Conv4Regions {
  Tensor regions;  // [grid*grid x channels]
};

struct EmbCategories {
  Tensor matrix;  // [categories x emb_dim]
};

using VisualFeature = std::variant<Videosum, Conv4Regions, EmbCategories>;

VisualKind kind_of(const VisualFeature& feature);

/// Throws unless the payload has exactly the configured shape and is finite.
void validate(const VisualFeature& feature, const FeatureDims& dims);

struct CategoryPosterior {
  std::vector<double> probs;

  /// Nonnegative, finite, sums to one within 1e-5.
  void validate(std::size_t expected_size) const;
};

/// Word embeddings for category label words.
class LabelEmbeddingTable {
 public:
  explicit LabelEmbeddingTable(std::size_t dim = 300) : dim_(dim) {}

  void add(std::string word, std::vector<double> vec);
  bool contains(std::string_view word) const { return table_.find(word) != table_.end(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return table_.size(); }

  const std::vector<double>& at(std::string_view word) const;
  /// Mean of the embeddings of the '+'-separated words of a category label.
  std::vector<double> phrase_embedding(std::string_view label) const;

  /// word2vec text format: optional "count dim" header, then "word v1 ... vd".
  static LabelEmbeddingTable load_text(std::istream& in);

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<double>, std::less<>> table_;
};

/// Elementwise mean over chunk vectors of equal length.
Videosum average_chunks(const std::vector<std::vector<double>>& chunk_vectors);

/// Row-major reshape into rows x (length / rows).
Tensor reshape_videosum(const Videosum& v, std::size_t rows = 32);
Videosum flatten_videosum(const Tensor& matrix);

/// grid x grid x channels -> (grid*grid) x channels, region 7*i + j = cell (i, j).
Conv4Regions regions_from_conv4(const Tensor& grid, const FeatureDims& dims = {});

/// Row k = posterior[k] * phrase_embedding(labels[k]).
EmbCategories build_emb_feature(const CategoryPosterior& posterior, const std::vector<std::string>& labels,
                                const LabelEmbeddingTable& table);

/// The matrix the decoder attends over (AIF) or the vector added to the
/// encoder output (AIC, as a 1 x dim matrix).
Tensor model_input(const VisualFeature& feature, const FeatureDims& dims, bool for_attention);

/// Builds a VisualFeature of the given kind from a raw ingested tensor:
///   videosum: [dim] or [chunks x dim] (chunks are averaged)
///   conv4:    [grid x grid x channels] or [regions x channels]
///   emb:      [categories x emb_dim]
VisualFeature from_raw(VisualKind kind, const Tensor& raw, const FeatureDims& dims);

}  // namespace mmt::features
