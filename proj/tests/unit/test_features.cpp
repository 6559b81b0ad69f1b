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
#include <sstream>

#include "doctest.h"
#include "mmtlab/error.hpp"
#include "mmtlab/features.hpp"
#include "mmtlab/mmtf.hpp"
#include "mmtlab/model.hpp"
#include "mmtlab/rng.hpp"

namespace ft = mmt::features;
using mmt::Tensor;

namespace {

Tensor ramp(Tensor::Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * 0.5 - 3.0;
  return t;
}

}  // namespace

TEST_CASE("full-size geometry gives the expected attention rows") {
  const ft::FeatureDims dims;
  CHECK(dims.conv4_regions() == 49);
  CHECK(dims.videosum_cols() == 64);
  CHECK(dims.emb_categories == 339);
  const auto v = ft::model_input(ft::Videosum{ramp({2048})}, dims, true);
  CHECK(v.shape() == Tensor::Shape{32, 64});
  CHECK(ft::model_input(ft::Videosum{ramp({2048})}, dims, false).shape() == Tensor::Shape{1, 2048});
  CHECK(ft::model_input(ft::Conv4Regions{ramp({49, 2048})}, dims, true).shape() == Tensor::Shape{49, 2048});
  CHECK(ft::model_input(ft::EmbCategories{ramp({339, 300})}, dims, true).shape() == Tensor::Shape{339, 300});
  CHECK_THROWS_AS(ft::model_input(ft::Conv4Regions{ramp({49, 2048})}, dims, false), mmt::Error);
}

TEST_CASE("videosum reshape is row-major and flatten inverts it") {
  const ft::Videosum v{ramp({12})};
  const auto m = ft::reshape_videosum(v, 3);
  CHECK(m.shape() == Tensor::Shape{3, 4});
  CHECK(m(1, 2) == v.vector[6]);
  CHECK(ft::flatten_videosum(m).vector == v.vector);
  CHECK_THROWS(ft::reshape_videosum(v, 5));
}

TEST_CASE("chunk averaging is the elementwise mean") {
  const auto v = ft::average_chunks({{1, 2, 3}, {3, 4, 5}});
  CHECK(v.vector == Tensor::vector({2, 3, 4}));
  CHECK_THROWS(ft::average_chunks({}));
  CHECK_THROWS(ft::average_chunks({{1, 2}, {1}}));
}

TEST_CASE("conv4 grid flattens cell (i, j) to region grid*i + j") {
  ft::FeatureDims dims;
  dims.conv4_grid = 3;
  dims.conv4_channels = 2;
  const auto grid = ramp({3, 3, 2});
  const auto r = ft::regions_from_conv4(grid, dims);
  CHECK(r.regions.shape() == Tensor::Shape{9, 2});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t c = 0; c < 2; ++c) CHECK(r.regions(3 * i + j, c) == grid[(i * 3 + j) * 2 + c]);
}

TEST_CASE("emb rows are posterior-scaled mean label embeddings") {
  ft::LabelEmbeddingTable table(2);
  table.add("playing", {1, 0});
  table.add("music", {0, 1});
  table.add("cutting", {2, 2});
  const ft::CategoryPosterior post{{0.25, 0.75}};
  const auto emb = ft::build_emb_feature(post, {"playing+music", "cutting"}, table);
  CHECK(emb.matrix.shape() == Tensor::Shape{2, 2});
  CHECK(emb.matrix(0, 0) == doctest::Approx(0.125));
  CHECK(emb.matrix(0, 1) == doctest::Approx(0.125));
  CHECK(emb.matrix(1, 0) == doctest::Approx(1.5));
  CHECK_THROWS(ft::build_emb_feature(post, {"playing", "dancing"}, table));
  CHECK_THROWS(ft::build_emb_feature(post, {"playing"}, table));
}

TEST_CASE("posteriors must be a distribution") {
  CHECK_NOTHROW(ft::CategoryPosterior{{0.5, 0.5}}.validate(2));
  CHECK_THROWS(ft::CategoryPosterior{{0.5, 0.6}}.validate(2));
  CHECK_THROWS(ft::CategoryPosterior{{1.5, -0.5}}.validate(2));
  CHECK_THROWS(ft::CategoryPosterior{{1.0}}.validate(2));
}

TEST_CASE("label embeddings load from word2vec text") {
  std::istringstream in("2 3\nplaying 1 2 3\nmusic 4 5 6\n");
  const auto t = ft::LabelEmbeddingTable::load_text(in);
  CHECK(t.dim() == 3);
  CHECK(t.size() == 2);
  CHECK(t.phrase_embedding("playing+music") == std::vector<double>{2.5, 3.5, 4.5});
  std::istringstream bad("playing 1 2\nmusic 1\n");
  CHECK_THROWS(ft::LabelEmbeddingTable::load_text(bad));
}

TEST_CASE("validation rejects wrong shapes and non-finite values") {
  ft::FeatureDims dims;
  dims.videosum_dim = 8;
  dims.videosum_rows = 2;
  CHECK_NOTHROW(ft::validate(ft::Videosum{ramp({8})}, dims));
  CHECK_THROWS(ft::validate(ft::Videosum{ramp({9})}, dims));
  auto t = ramp({8});
  t[3] = std::nan("");
  CHECK_THROWS(ft::validate(ft::Videosum{t}, dims));
}

TEST_CASE("MMTF records round-trip through float32") {
  const Tensor t = Tensor::matrix(2, 3, {0.1, -2, 3.5, 1e10, 0, 7});
  std::stringstream ss;
  mmt::mmtf::write_record(ss, t);
  CHECK(ss.str().size() == mmt::mmtf::record_size(t.shape()));
  const auto back = mmt::mmtf::read_record(ss);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
  std::istringstream truncated(ss.str().substr(0, 10));
  CHECK_THROWS(mmt::mmtf::read_record(truncated));
}

TEST_CASE("feature files give random access by segment id") {
  const auto dir = std::filesystem::temp_directory_path() / "mmtlab_test_features";
  std::filesystem::create_directories(dir);
  const auto path = dir / "f.mmtf";
  mmt::mmtf::write_feature_file(path, {{"seg_b", ramp({2, 2})}, {"seg_a", ramp({3})}});
  const mmt::mmtf::FeatureFile file(path);
  CHECK(file.contains("seg_a"));
  CHECK_FALSE(file.contains("seg_c"));
  CHECK(file.read("seg_a") == ramp({3}));
  CHECK(file.read("seg_b") == ramp({2, 2}));
  CHECK_THROWS(file.read("seg_c"));
  CHECK_THROWS(mmt::mmtf::write_feature_file(path, {{"x", ramp({1})}, {"x", ramp({1})}}));
  std::filesystem::remove_all(dir);
}

TEST_CASE("raw tensors convert to features by kind") {
  ft::FeatureDims dims;
  dims.videosum_dim = 4;
  dims.videosum_rows = 2;
  dims.conv4_grid = 2;
  dims.conv4_channels = 3;
  const auto v = ft::from_raw(ft::VisualKind::Videosum, Tensor::matrix(2, 4, {0, 0, 0, 0, 2, 4, 6, 8}), dims);
  CHECK(std::get<ft::Videosum>(v).vector == Tensor::vector({1, 2, 3, 4}));
  CHECK(ft::kind_of(ft::from_raw(ft::VisualKind::Conv4, ramp({2, 2, 3}), dims)) == ft::VisualKind::Conv4);
  CHECK_THROWS(ft::from_raw(ft::VisualKind::Conv4, ramp({5, 3}), dims));
}

TEST_CASE("AIF visual geometry at full size") {
  auto c = mmt::model::ModelConfig::transformer_big();
  c.mode = mmt::model::Mode::AIF;
  c.src_vocab = c.tgt_vocab = 10;
  const ft::FeatureDims dims;
  for (auto [kind, rows, cols] : std::vector<std::tuple<ft::VisualKind, std::size_t, std::size_t>>{
           {ft::VisualKind::Videosum, 32, 64}, {ft::VisualKind::Conv4, 49, 2048}, {ft::VisualKind::Emb, 339, 300}}) {
    c.visual_kind = kind;
    c.set_visual_geometry(dims);
    CHECK(c.visual_rows == rows);
    CHECK(c.visual_dim == cols);
    for (const auto& [name, shape] : mmt::model::parameter_shapes(c)) {
      if (name.find(".vis.k") != std::string::npos) CHECK(shape == Tensor::Shape{cols, 1024});
    }
  }
  CHECK(c.n_layers == 6);
  CHECK(c.n_heads == 16);
}
