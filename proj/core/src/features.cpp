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

#include "mmtlab/features.hpp"

#include <cmath>
#include <istream>
#include <sstream>

#include "mmtlab/error.hpp"

namespace mmt::features {

namespace {

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw Error(std::string(what) + " contains NaN or Inf");
}

void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(std::string(what) + " contains NaN or Inf");
  }
}

}  // namespace

VisualKind parse_visual_kind(std::string_view name) {
  if (name == "none") return VisualKind::None;
  if (name == "videosum") return VisualKind::Videosum;
  if (name == "conv4") return VisualKind::Conv4;
  if (name == "emb") return VisualKind::Emb;
  throw Error("unknown visual feature kind '" + std::string(name) + "'");
}

std::string_view visual_kind_name(VisualKind kind) {
  switch (kind) {
    case VisualKind::None: return "none";
    case VisualKind::Videosum: return "videosum";
    case VisualKind::Conv4: return "conv4";
    case VisualKind::Emb: return "emb";
  }
  return "none";
}

void FeatureDims::validate() const {
  if (videosum_dim == 0 || videosum_rows == 0 || conv4_grid == 0 || conv4_channels == 0 || emb_categories == 0 ||
      emb_dim == 0) {
    throw Error("feature dimensions must be positive");
  }
  if (videosum_dim % videosum_rows != 0) {
    throw Error("videosum length " + std::to_string(videosum_dim) + " is not divisible into " +
                std::to_string(videosum_rows) + " rows");
  }
}

VisualKind kind_of(const VisualFeature& feature) {
  if (std::holds_alternative<Videosum>(feature)) return VisualKind::Videosum;
  if (std::holds_alternative<Conv4Regions>(feature)) return VisualKind::Conv4;
  return VisualKind::Emb;
}

void validate(const VisualFeature& feature, const FeatureDims& dims) {
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, Videosum>) {
          if (f.vector.shape() != Tensor::Shape{dims.videosum_dim}) {
            throw Error("videosum must have shape [" + std::to_string(dims.videosum_dim) + "], got " +
                        shape_string(f.vector.shape()));
          }
          require_finite(f.vector, "videosum");
        } else if constexpr (std::is_same_v<T, Conv4Regions>) {
          const Tensor::Shape want{dims.conv4_regions(), dims.conv4_channels};
          if (f.regions.shape() != want) {
            throw Error("conv4 regions must have shape " + shape_string(want) + ", got " +
                        shape_string(f.regions.shape()));
          }
          require_finite(f.regions, "conv4");
        } else {
          const Tensor::Shape want{dims.emb_categories, dims.emb_dim};
          if (f.matrix.shape() != want) {
            throw Error("emb feature must have shape " + shape_string(want) + ", got " + shape_string(f.matrix.shape()));
          }
          require_finite(f.matrix, "emb feature");
        }
      },
      feature);
}

void CategoryPosterior::validate(std::size_t expected_size) const {
  if (probs.size() != expected_size) {
    throw Error("category posterior has " + std::to_string(probs.size()) + " entries, expected " +
                std::to_string(expected_size));
  }
  double total = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) throw Error("category posterior entries must be finite and nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-5) throw Error("category posterior sums to " + std::to_string(total) + ", not 1");
}

void LabelEmbeddingTable::add(std::string word, std::vector<double> vec) {
  if (vec.size() != dim_) {
    throw Error("embedding for '" + word + "' has " + std::to_string(vec.size()) + " values, expected " +
                std::to_string(dim_));
  }
  require_finite(vec, "word embedding");
  table_[std::move(word)] = std::move(vec);
}

const std::vector<double>& LabelEmbeddingTable::at(std::string_view word) const {
  auto it = table_.find(word);
  if (it == table_.end()) throw Error("no embedding for word '" + std::string(word) + "'");
  return it->second;
}

std::vector<double> LabelEmbeddingTable::phrase_embedding(std::string_view label) const {
  std::vector<double> out(dim_, 0.0);
  std::size_t words = 0;
  std::size_t start = 0;
  while (start <= label.size()) {
    const auto pos = label.find('+', start);
    const auto word = label.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    if (word.empty()) throw Error("malformed category label '" + std::string(label) + "'");
    const auto& e = at(word);
    for (std::size_t i = 0; i < dim_; ++i) out[i] += e[i];
    ++words;
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (double& v : out) v /= static_cast<double>(words);
  return out;
}

LabelEmbeddingTable LabelEmbeddingTable::load_text(std::istream& in) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> vec;
    double v;
    while (ss >> v) vec.push_back(v);
    if (!ss.eof()) throw FormatError("embedding line " + std::to_string(line_no) + ": bad number");
    if (line_no == 1 && vec.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "count dim" header
    }
    if (vec.empty()) throw FormatError("embedding line " + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim) throw FormatError("embedding line " + std::to_string(line_no) + ": inconsistent dimension");
    rows.emplace_back(std::move(word), std::move(vec));
  }
  if (rows.empty()) throw FormatError("embedding table is empty");
  LabelEmbeddingTable table(dim);
  for (auto& [w, v] : rows) table.add(std::move(w), std::move(v));
  return table;
}

Videosum average_chunks(const std::vector<std::vector<double>>& chunk_vectors) {
  if (chunk_vectors.empty()) throw Error("average_chunks needs at least one chunk");
  const std::size_t n = chunk_vectors.front().size();
  if (n == 0) throw Error("average_chunks: empty chunk vector");
  std::vector<double> mean(n, 0.0);
  for (const auto& chunk : chunk_vectors) {
    if (chunk.size() != n) throw Error("average_chunks: chunk vectors have different lengths");
    require_finite(chunk, "chunk vector");
    for (std::size_t i = 0; i < n; ++i) mean[i] += chunk[i];
  }
  for (double& v : mean) v /= static_cast<double>(chunk_vectors.size());
  return {Tensor::vector(std::move(mean))};
}

Tensor reshape_videosum(const Videosum& v, std::size_t rows) {
  if (v.vector.rank() != 1) throw Error("videosum must be a vector");
  if (rows == 0 || v.vector.size() % rows != 0) {
    throw Error("videosum of length " + std::to_string(v.vector.size()) + " cannot be reshaped into " +
                std::to_string(rows) + " rows");
  }
  require_finite(v.vector, "videosum");
  return v.vector.reshaped({rows, v.vector.size() / rows});
}

Videosum flatten_videosum(const Tensor& matrix) { return {matrix.reshaped({matrix.size()})}; }

Conv4Regions regions_from_conv4(const Tensor& grid, const FeatureDims& dims) {
  const Tensor::Shape want{dims.conv4_grid, dims.conv4_grid, dims.conv4_channels};
  if (grid.shape() != want) {
    throw Error("conv4 grid must have shape " + shape_string(want) + ", got " + shape_string(grid.shape()));
  }
  require_finite(grid, "conv4 grid");
  // row-major (i, j, c) already lays cell (i, j) out as row i*grid + j
  return {grid.reshaped({dims.conv4_regions(), dims.conv4_channels})};
}

EmbCategories build_emb_feature(const CategoryPosterior& posterior, const std::vector<std::string>& labels,
                                const LabelEmbeddingTable& table) {
  if (labels.size() != posterior.probs.size()) {
    throw Error("build_emb_feature: " + std::to_string(labels.size()) + " labels but " +
                std::to_string(posterior.probs.size()) + " posterior entries");
  }
  posterior.validate(labels.size());
  Tensor out({labels.size(), table.dim()});
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto e = table.phrase_embedding(labels[k]);
    for (std::size_t c = 0; c < e.size(); ++c) out(k, c) = posterior.probs[k] * e[c];
  }
  return {std::move(out)};
}

Tensor model_input(const VisualFeature& feature, const FeatureDims& dims, bool for_attention) {
  validate(feature, dims);
  if (const auto* v = std::get_if<Videosum>(&feature)) {
    if (for_attention) return reshape_videosum(*v, dims.videosum_rows);
    return v->vector.reshaped({1, dims.videosum_dim});
  }
  if (!for_attention) throw Error("only videosum features can be added to the encoder output");
  if (const auto* c = std::get_if<Conv4Regions>(&feature)) return c->regions;
  return std::get<EmbCategories>(feature).matrix;
}

VisualFeature from_raw(VisualKind kind, const Tensor& raw, const FeatureDims& dims) {
  VisualFeature out;
  switch (kind) {
    case VisualKind::Videosum: {
      if (raw.rank() == 1) {
        out = Videosum{raw};
      } else if (raw.rank() == 2) {
        std::vector<std::vector<double>> chunks;
        for (std::size_t r = 0; r < raw.rows(); ++r) chunks.emplace_back(raw.row(r).begin(), raw.row(r).end());
        out = average_chunks(chunks);
      } else {
        throw Error("videosum input must be a vector or a chunk matrix, got " + shape_string(raw.shape()));
      }
      break;
    }
    case VisualKind::Conv4:
      out = raw.rank() == 3 ? regions_from_conv4(raw, dims) : Conv4Regions{raw};
      break;
    case VisualKind::Emb:
      out = EmbCategories{raw};
      break;
    case VisualKind::None:
      throw Error("no feature kind selected");
  }
  validate(out, dims);
  return out;
}

}  // namespace mmt::features
