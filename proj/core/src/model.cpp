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

#include "mmtlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mmtlab/error.hpp"
#include "mmtlab/rng.hpp"

namespace mmt::model {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string layer_prefix(const char* stack, std::size_t layer) { return std::string(stack) + "." + std::to_string(layer); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Mode parse_mode(std::string_view name) {
  if (name == "text-only" || name == "TextOnly" || name == "text") return Mode::TextOnly;
  if (name == "AIC" || name == "aic") return Mode::AIC;
  if (name == "AIF" || name == "aif") return Mode::AIF;
  throw Error("unknown model mode '" + std::string(name) + "'");
}

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::TextOnly: return "text-only";
    case Mode::AIC: return "AIC";
    case Mode::AIF: return "AIF";
  }
  return "text-only";
}

ModelConfig ModelConfig::transformer_big() {
  ModelConfig c;
  c.n_layers = 6;
  c.n_heads = 16;
  c.model_dim = 1024;
  c.ff_dim = 4096;
  c.dropout = 0.1;
  return c;
}

void ModelConfig::set_visual_geometry(const features::FeatureDims& dims) {
  visual_rows = visual_dim = 0;
  if (mode == Mode::AIC) {
    visual_rows = 1;
    visual_dim = dims.videosum_dim;
    return;
  }
  if (mode != Mode::AIF) return;
  switch (visual_kind) {
    case VisualKind::Videosum:
      visual_rows = dims.videosum_rows;
      visual_dim = dims.videosum_cols();
      break;
    case VisualKind::Conv4:
      visual_rows = dims.conv4_regions();
      visual_dim = dims.conv4_channels;
      break;
    case VisualKind::Emb:
      visual_rows = dims.emb_categories;
      visual_dim = dims.emb_dim;
      break;
    case VisualKind::None:
      break;
  }
}

void ModelConfig::validate() const {
  if (n_layers == 0 || n_heads == 0 || model_dim == 0 || ff_dim == 0 || max_len == 0) {
    throw Error("model config: layers, heads, dims and max_len must be positive");
  }
  if (model_dim % n_heads != 0) {
    throw Error("model config: model_dim " + std::to_string(model_dim) + " is not divisible by " +
                std::to_string(n_heads) + " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("model config: dropout must lie in [0, 1)");
  if (src_vocab == 0 || tgt_vocab == 0) throw Error("model config: vocabulary sizes must be set");
  switch (mode) {
    case Mode::TextOnly:
      if (visual_kind != VisualKind::None) throw Error("model config: text-only models take no visual features");
      if (visual_rows != 0 || visual_dim != 0) throw Error("model config: text-only models have no visual geometry");
      break;
    case Mode::AIC:
      if (visual_kind != VisualKind::Videosum) throw Error("model config: AIC requires videosum features");
      if (visual_rows != 1 || visual_dim == 0) throw Error("model config: AIC needs visual_rows = 1 and visual_dim > 0");
      break;
    case Mode::AIF:
      if (visual_kind == VisualKind::None) throw Error("model config: AIF requires a visual feature kind");
      if (visual_rows == 0 || visual_dim == 0) throw Error("model config: AIF needs visual_rows and visual_dim");
      break;
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "layers = " << n_layers << '\n'
      << "heads = " << n_heads << '\n'
      << "model_dim = " << model_dim << '\n'
      << "ff_dim = " << ff_dim << '\n'
      << "dropout = " << format_double(dropout) << '\n'
      << "mode = " << mode_name(mode) << '\n'
      << "visual_kind = " << features::visual_kind_name(visual_kind) << '\n'
      << "max_len = " << max_len << '\n'
      << "src_vocab = " << src_vocab << '\n'
      << "tgt_vocab = " << tgt_vocab << '\n'
      << "visual_rows = " << visual_rows << '\n'
      << "visual_dim = " << visual_dim << '\n';
  return out.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (key == "layers") c.n_layers = std::stoul(value);
      else if (key == "heads") c.n_heads = std::stoul(value);
      else if (key == "model_dim") c.model_dim = std::stoul(value);
      else if (key == "ff_dim") c.ff_dim = std::stoul(value);
      else if (key == "dropout") c.dropout = std::stod(value);
      else if (key == "mode") c.mode = parse_mode(value);
      else if (key == "visual_kind") c.visual_kind = features::parse_visual_kind(value);
      else if (key == "max_len") c.max_len = std::stoul(value);
      else if (key == "src_vocab") c.src_vocab = std::stoul(value);
      else if (key == "tgt_vocab") c.tgt_vocab = std::stoul(value);
      else if (key == "visual_rows") c.visual_rows = std::stoul(value);
      else if (key == "visual_dim") c.visual_dim = std::stoul(value);
      else throw FormatError("unknown model config key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw FormatError("bad value for model config key '" + key + "'");
    } catch (const std::out_of_range&) {
      throw FormatError("bad value for model config key '" + key + "'");
    }
  }
  return c;
}

std::vector<std::pair<std::string, Tensor::Shape>> parameter_shapes(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.model_dim, f = c.ff_dim;
  std::vector<std::pair<std::string, Tensor::Shape>> shapes;
  auto ln = [&](const std::string& p) {
    shapes.push_back({p + ".g", {d}});
    shapes.push_back({p + ".b", {d}});
  };
  auto attn = [&](const std::string& p, std::size_t kv_dim) {
    shapes.push_back({p + ".q", {d, d}});
    shapes.push_back({p + ".k", {kv_dim, d}});
    shapes.push_back({p + ".v", {kv_dim, d}});
    shapes.push_back({p + ".o", {d, d}});
  };
  auto ff = [&](const std::string& p) {
    shapes.push_back({p + ".w1", {d, f}});
    shapes.push_back({p + ".b1", {f}});
    shapes.push_back({p + ".w2", {f, d}});
    shapes.push_back({p + ".b2", {d}});
  };
  shapes.push_back({"src_emb", {c.src_vocab, d}});
  shapes.push_back({"tgt_emb", {c.tgt_vocab, d}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto p = layer_prefix("enc", l);
    ln(p + ".ln1");
    attn(p + ".self", d);
    ln(p + ".ln2");
    ff(p + ".ff");
  }
  ln("enc.ln");
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto p = layer_prefix("dec", l);
    ln(p + ".ln1");
    attn(p + ".self", d);
    ln(p + ".ln2");
    attn(p + ".cross", d);
    if (c.mode == Mode::AIF) {
      ln(p + ".ln3");
      attn(p + ".vis", c.visual_dim);
    }
    ln(p + ".ln4");
    ff(p + ".ff");
  }
  ln("dec.ln");
  shapes.push_back({"out.w", {d, c.tgt_vocab}});
  shapes.push_back({"out.b", {c.tgt_vocab}});
  if (c.mode == Mode::AIC) {
    shapes.push_back({"aic.w", {c.visual_dim, d}});
    shapes.push_back({"aic.b", {d}});
  }
  std::sort(shapes.begin(), shapes.end());
  return shapes;
}

ParamMap init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamMap params;
  for (auto& [name, shape] : parameter_shapes(config)) {
    Rng rng(mix_seed(seed, fnv1a(name)));
    Tensor t(shape);
    if (name == "src_emb" || name == "tgt_emb") {
      const double sd = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
      for (double& v : t.storage()) v = sd * rng.normal();
    } else if (ends_with(name, ".g")) {
      t.fill(1.0);
    } else if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& v : t.storage()) v = rng.uniform(-limit, limit);
    }
    params.emplace(name, ad::parameter(std::move(t)));
  }
  return params;
}

ParamSnapshot snapshot(const ParamMap& params) {
  ParamSnapshot snap;
  for (const auto& [name, var] : params) snap.emplace(name, var.value());
  return snap;
}

ParamMap from_snapshot(const ParamSnapshot& snap) {
  ParamMap params;
  for (const auto& [name, t] : snap) params.emplace(name, ad::parameter(t));
  return params;
}

Batch Batch::from(const std::vector<std::vector<int>>& sequences, int pad_id) {
  if (sequences.empty()) throw Error("cannot build an empty batch");
  Batch b;
  b.size = sequences.size();
  for (const auto& s : sequences) {
    if (s.empty()) throw Error("batch contains an empty sequence");
    b.len = std::max(b.len, s.size());
    b.lengths.push_back(s.size());
  }
  b.ids.assign(b.size * b.len, pad_id);
  b.valid.assign(b.size * b.len, 0);
  for (std::size_t i = 0; i < b.size; ++i) {
    for (std::size_t t = 0; t < sequences[i].size(); ++t) {
      b.ids[i * b.len + t] = sequences[i][t];
      b.valid[i * b.len + t] = 1;
    }
  }
  return b;
}

ad::Var ForwardContext::dropout(const ad::Var& x) {
  if (!train_ || rate_ == 0.0) return x;
  return ad::dropout(x, rate_, mix_seed(seed_, calls_++));
}

Tensor positional_encoding(std::size_t len, std::size_t dim) {
  Tensor pe({len, dim});
  for (std::size_t pos = 0; pos < len; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  }
  return pe;
}

Transformer::Transformer(ModelConfig config, ParamMap params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  for (const auto& [name, shape] : parameter_shapes(config_)) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("model parameters lack '" + name + "'");
    if (it->second.shape() != shape) {
      throw Error("parameter '" + name + "' has shape " + shape_string(it->second.shape()) + ", expected " +
                  shape_string(shape));
    }
  }
}

const ad::Var& Transformer::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("no parameter '" + name + "'");
  return it->second;
}

ad::Var Transformer::norm(const std::string& prefix, const ad::Var& x) const {
  return ad::layer_norm(x, param(prefix + ".g"), param(prefix + ".b"));
}

ad::Var Transformer::feed_forward(const std::string& prefix, const ad::Var& x) const {
  auto h = ad::relu(ad::add_bias(ad::matmul(x, param(prefix + ".w1")), param(prefix + ".b1")));
  return ad::add_bias(ad::matmul(h, param(prefix + ".w2")), param(prefix + ".b2"));
}

ad::AttentionOutput Transformer::multi_head(const std::string& prefix, const ad::Var& queries_in, const ad::Var& kv_in,
                                            ad::AttentionLayout layout) const {
  layout.heads = config_.n_heads;
  auto q = ad::matmul(queries_in, param(prefix + ".q"));
  auto k = ad::matmul(kv_in, param(prefix + ".k"));
  auto v = ad::matmul(kv_in, param(prefix + ".v"));
  auto att = ad::attention(q, k, v, layout);
  return {ad::matmul(att.output, param(prefix + ".o")), std::move(att.weights)};
}

ad::Var Transformer::embed(const std::string& table, const Batch& batch, ForwardContext& ctx) const {
  if (batch.len > config_.max_len) {
    throw Error("sequence length " + std::to_string(batch.len) + " exceeds max_len " + std::to_string(config_.max_len));
  }
  const std::size_t d = config_.model_dim;
  auto x = ad::scale(ad::embedding(param(table), batch.ids), std::sqrt(static_cast<double>(d)));
  const Tensor pe = positional_encoding(batch.len, d);
  Tensor tiled({batch.size * batch.len, d});
  for (std::size_t b = 0; b < batch.size; ++b)
    std::copy(pe.storage().begin(), pe.storage().end(), tiled.data() + b * batch.len * d);
  return ctx.dropout(ad::add_constant(x, tiled));
}

ad::Var Transformer::encode(const Batch& source, ForwardContext& ctx, AttentionTrace* trace) const {
  if (source.size == 0 || source.len == 0) throw Error("cannot encode an empty source");
  ad::AttentionLayout layout;
  layout.batch = source.size;
  layout.q_len = layout.k_len = source.len;
  layout.key_valid = source.valid;

  auto x = embed("src_emb", source, ctx);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto p = layer_prefix("enc", l);
    auto h = norm(p + ".ln1", x);
    auto att = multi_head(p + ".self", h, h, layout);
    if (trace) trace->encoder.push_back(att.weights);
    x = ad::add(x, ctx.dropout(att.output));
    h = norm(p + ".ln2", x);
    x = ad::add(x, ctx.dropout(feed_forward(p + ".ff", h)));
  }
  return norm("enc.ln", x);
}

ad::Var Transformer::condition_aic(const ad::Var& memory, const ad::Var& visual_vectors, std::size_t source_len) const {
  if (config_.mode != Mode::AIC) throw Error("condition_aic called on a " + std::string(mode_name(config_.mode)) + " model");
  if (visual_vectors.value().rank() != 2 || visual_vectors.value().cols() != config_.visual_dim) {
    throw Error("AIC feature has shape " + shape_string(visual_vectors.shape()) + ", expected batch x " +
                std::to_string(config_.visual_dim));
  }
  auto projected = ad::add_bias(ad::matmul(visual_vectors, param("aic.w")), param("aic.b"));
  return ad::add_group_rows(memory, projected, source_len);
}

ad::Var Transformer::decode_forward(const ad::Var& memory, const Batch& source, const std::optional<ad::Var>& visual,
                                    const Batch& target_in, ForwardContext& ctx, AttentionTrace* trace) const {
  if (target_in.size != source.size) throw Error("source and target batches differ in size");
  if (memory.value().rows() != source.size * source.len || memory.value().cols() != config_.model_dim) {
    throw Error("encoder memory shape " + shape_string(memory.shape()) + " does not match the source batch");
  }
  if (config_.mode == Mode::TextOnly && visual) throw Error("visual features supplied to a text-only model");
  if (config_.mode != Mode::TextOnly && !visual) {
    throw Error(std::string(mode_name(config_.mode)) + " model requires visual features");
  }

  ad::Var mem = memory;
  if (config_.mode == Mode::AIC) mem = condition_aic(memory, *visual, source.len);
  if (config_.mode == Mode::AIF) {
    const auto& v = visual->value();
    if (v.rank() != 2 || v.rows() != source.size * config_.visual_rows || v.cols() != config_.visual_dim) {
      throw Error("AIF visual input has shape " + shape_string(v.shape()) + ", expected " +
                  std::to_string(source.size * config_.visual_rows) + "x" + std::to_string(config_.visual_dim));
    }
  }

  ad::AttentionLayout self_layout;
  self_layout.batch = target_in.size;
  self_layout.q_len = self_layout.k_len = target_in.len;
  self_layout.causal = true;
  self_layout.key_valid = target_in.valid;

  ad::AttentionLayout cross_layout;
  cross_layout.batch = source.size;
  cross_layout.q_len = target_in.len;
  cross_layout.k_len = source.len;
  cross_layout.key_valid = source.valid;

  ad::AttentionLayout vis_layout;
  vis_layout.batch = source.size;
  vis_layout.q_len = target_in.len;
  vis_layout.k_len = config_.visual_rows;

  auto x = embed("tgt_emb", target_in, ctx);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const auto p = layer_prefix("dec", l);
    DecoderLayerAttention maps;
    auto h = norm(p + ".ln1", x);
    auto self = multi_head(p + ".self", h, h, self_layout);
    maps.self = self.weights;
    x = ad::add(x, ctx.dropout(self.output));

    h = norm(p + ".ln2", x);
    auto cross = multi_head(p + ".cross", h, mem, cross_layout);
    maps.cross = cross.weights;
    x = ad::add(x, ctx.dropout(cross.output));

    if (config_.mode == Mode::AIF) {
      h = norm(p + ".ln3", x);
      auto vis = multi_head(p + ".vis", h, *visual, vis_layout);
      maps.visual = vis.weights;
      x = ad::add(x, ctx.dropout(vis.output));
    }

    h = norm(p + ".ln4", x);
    x = ad::add(x, ctx.dropout(feed_forward(p + ".ff", h)));
    if (trace) trace->decoder.push_back(std::move(maps));
  }
  x = norm("dec.ln", x);
  return ad::add_bias(ad::matmul(x, param("out.w")), param("out.b"));
}

ad::Var Transformer::loss(const Batch& source, const std::optional<ad::Var>& visual, const Batch& target_in,
                          const std::vector<int>& target_out, ForwardContext& ctx) const {
  auto memory = encode(source, ctx);
  auto logits = decode_forward(memory, source, visual, target_in, ctx);
  return ad::cross_entropy(logits, target_out, -1);
}

ad::Var stack_visual(const std::vector<const Tensor*>& per_item) {
  if (per_item.empty()) throw Error("no visual inputs to stack");
  const std::size_t rows = per_item.front()->rows(), cols = per_item.front()->cols();
  Tensor out({per_item.size() * rows, cols});
  for (std::size_t i = 0; i < per_item.size(); ++i) {
    if (per_item[i]->rows() != rows || per_item[i]->cols() != cols) throw Error("visual inputs differ in shape");
    std::copy(per_item[i]->storage().begin(), per_item[i]->storage().end(), out.data() + i * rows * cols);
  }
  return ad::constant(std::move(out));
}

}  // namespace mmt::model
