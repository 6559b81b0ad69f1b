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

#include "mmtlab/synth.hpp"

#include <cstdio>
#include <fstream>

#include "mmtlab/error.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/mmtf.hpp"
#include "mmtlab/rng.hpp"

namespace fs = std::filesystem;

namespace mmt::synth {

namespace {

struct Noun {
  const char* source;
  const char* target;
  const char* article;
};

constexpr Noun kSubjects[] = {{"man", "homem", "o"},     {"woman", "mulher", "a"}, {"boy", "menino", "o"},
                              {"girl", "menina", "a"},   {"chef", "cozinheiro", "o"}, {"child", "crianca", "a"}};
constexpr Noun kObjects[] = {{"bread", "pao", "o"},  {"paper", "papel", "o"}, {"water", "agua", "a"},
                             {"soup", "sopa", "a"},  {"shirt", "camisa", "a"}, {"box", "caixa", "a"},
                             {"ball", "bola", "a"},  {"door", "porta", "a"}};

masking::AnnotatedToken tok(const std::string& surface, const std::string& lemma, masking::Pos pos) {
  return {surface, lemma, pos};
}

Tensor pattern(Rng& rng, std::size_t n) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = rng.normal();
  return t;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

const std::vector<SynthVerb>& verbs() {
  static const std::vector<SynthVerb> table{
      {"cut", "cuts", "cutting", "corta", "cortar", "cortando"},
      {"fold", "folds", "folding", "dobra", "dobrar", "dobrando"},
      {"pour", "pours", "pouring", "derrama", "derramar", "derramando"},
      {"stir", "stirs", "stirring", "mexe", "mexer", "mexendo"},
      {"wash", "washes", "washing", "lava", "lavar", "lavando"},
      {"paint", "paints", "painting", "pinta", "pintar", "pintando"},
      {"throw", "throws", "throwing", "joga", "jogar", "jogando"},
      {"open", "opens", "opening", "abre", "abrir", "abrindo"},
  };
  return table;
}

int verb_of_target_token(std::string_view token) {
  const auto& vs = verbs();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (token == vs[i].target_finite || token == vs[i].target_infinitive || token == vs[i].target_gerund) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

SynthData generate(const SynthOptions& o) {
  if (o.n_val + o.n_test >= o.n_sentences) throw Error("synthetic split sizes leave no training data");
  const auto& vs = verbs();
  if (o.dims.emb_categories != vs.size()) {
    throw Error("synthetic emb_categories must be " + std::to_string(vs.size()));
  }
  o.dims.validate();
  SynthData data;
  Rng pattern_rng(mix_seed(o.seed, 1));
  std::vector<Tensor> videosum_patterns, conv4_patterns;
  const std::size_t conv4_size = o.dims.conv4_regions() * o.dims.conv4_channels;
  for (std::size_t k = 0; k < vs.size(); ++k) {
    videosum_patterns.push_back(pattern(pattern_rng, o.dims.videosum_dim));
    conv4_patterns.push_back(pattern(pattern_rng, conv4_size));
    data.labels.push_back(vs[k].gerund);
    std::vector<double> vec(o.dims.emb_dim);
    for (double& x : vec) x = pattern_rng.normal();
    data.label_vectors[vs[k].gerund] = std::move(vec);
  }

  Rng rng(mix_seed(o.seed, 2));
  const std::size_t n_train = o.n_sentences - o.n_val - o.n_test;
  using masking::Pos;
  for (std::size_t i = 0; i < o.n_sentences; ++i) {
    const std::string split = i < n_train ? "train" : i < n_train + o.n_val ? "val" : "test";
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i + 1);
    const std::size_t k = rng.below(vs.size());
    const auto& subj = kSubjects[rng.below(std::size(kSubjects))];
    const auto& obj = kObjects[rng.below(std::size(kObjects))];
    const auto& v = vs[k];
    const auto form = rng.below(4);

    masking::AnnotatedSentence src;
    src.tokens.push_back(tok("the", "the", Pos::Det));
    src.tokens.push_back(tok(subj.source, subj.source, Pos::Noun));
    std::string tgt = std::string(subj.target) + " ";
    if (form == 1) {
      src.tokens.push_back(tok("is", "be", Pos::Aux));
      src.tokens.push_back(tok(v.gerund, v.lemma, Pos::Verb));
      tgt += "esta " + v.target_gerund;
    } else if (form == 2) {
      src.tokens.push_back(tok("can", "can", Pos::Aux));
      src.tokens.push_back(tok(v.lemma, v.lemma, Pos::Verb));
      tgt += "pode " + v.target_infinitive;
    } else {
      src.tokens.push_back(tok(v.third_person, v.lemma, Pos::Verb));
      tgt += v.target_finite;
    }
    src.tokens.push_back(tok("the", "the", Pos::Det));
    src.tokens.push_back(tok(obj.source, obj.source, Pos::Noun));
    tgt += std::string(" ") + obj.article + " " + obj.target;
    if (form == 3) {
      src.tokens.push_back(tok("and", "and", Pos::Cconj));
      src.tokens.push_back(tok("smiles", "smile", Pos::Verb));
      tgt += " e sorri";
    }

    auto& s = data.splits[split];
    s.ids.push_back(id);
    s.source.push_back(std::move(src));
    s.target.push_back(std::move(tgt));
    s.verb.push_back(k);

    Tensor videosum = videosum_patterns[k];
    for (std::size_t j = 0; j < videosum.size(); ++j) videosum[j] += o.noise * rng.normal();
    Tensor conv4({o.dims.conv4_grid, o.dims.conv4_grid, o.dims.conv4_channels});
    for (std::size_t j = 0; j < conv4.size(); ++j) conv4[j] = conv4_patterns[k][j] + o.noise * rng.normal();
    Tensor posterior({vs.size()}, 0.0);
    posterior[k] = 1.0;
    data.videosum.emplace(id, std::move(videosum));
    data.conv4.emplace(id, std::move(conv4));
    data.posterior.emplace(id, std::move(posterior));
  }
  return data;
}

fs::path write_dataset(const SynthData& data, const SynthOptions& o, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [split, s] : data.splits) {
    {
      auto out = open_out(dir / (split + ".src.tsv"));
      masking::write_annotated_corpus(out, s.source);
    }
    auto tgt = open_out(dir / (split + ".tgt"));
    for (const auto& t : s.target) tgt << t << '\n';
    auto ids = open_out(dir / (split + ".ids"));
    for (const auto& id : s.ids) ids << id << '\n';
  }
  {
    auto lex = open_out(dir / "lexicon.txt");
    lex << "# synthetic action categories\n";
    for (const auto& l : data.labels) lex << l << '\n';
    auto labels = open_out(dir / "categories.txt");
    for (const auto& l : data.labels) labels << l << '\n';
    auto vecs = open_out(dir / "label_vectors.txt");
    vecs << data.label_vectors.size() << ' ' << o.dims.emb_dim << '\n';
    char buf[40];
    for (const auto& [w, v] : data.label_vectors) {
      vecs << w;
      for (double x : v) {
        std::snprintf(buf, sizeof buf, " %.9g", x);
        vecs << buf;
      }
      vecs << '\n';
    }
  }
  auto records = [](const std::map<std::string, Tensor>& m) {
    return std::vector<std::pair<std::string, Tensor>>(m.begin(), m.end());
  };
  mmtf::write_feature_file(dir / "videosum.mmtf", records(data.videosum));
  mmtf::write_feature_file(dir / "conv4.mmtf", records(data.conv4));
  mmtf::write_feature_file(dir / "posteriors.mmtf", records(data.posterior));

  const auto cfg_path = dir / "experiment.cfg";
  auto cfg = open_out(cfg_path);
  cfg << "# constructed verb-from-feature task\n"
      << "seed = " << o.seed << "\n"
      << "output_dir = run\n";
  for (const char* split : {"train", "val", "test"}) {
    cfg << split << "_source = " << split << ".src.tsv\n"
        << split << "_target = " << split << ".tgt\n"
        << split << "_ids = " << split << ".ids\n";
  }
  cfg << "lexicon = lexicon.txt\n"
      << "videosum_features = videosum.mmtf\n"
      << "conv4_features = conv4.mmtf\n"
      << "emb_posteriors = posteriors.mmtf\n"
      << "category_labels = categories.txt\n"
      << "label_embeddings = label_vectors.txt\n"
      << "videosum_dim = " << o.dims.videosum_dim << "\n"
      << "videosum_rows = " << o.dims.videosum_rows << "\n"
      << "conv4_grid = " << o.dims.conv4_grid << "\n"
      << "conv4_channels = " << o.dims.conv4_channels << "\n"
      << "emb_categories = " << o.dims.emb_categories << "\n"
      << "emb_dim = " << o.dims.emb_dim << "\n"
      << "source_merges = 50\n"
      << "target_merges = 50\n"
      << "layers = 2\nheads = 2\nmodel_dim = 32\nff_dim = 64\ndropout = 0.1\nmax_len = 32\n"
      << "max_epochs = 20\npatience = 5\nbatch_tokens = 1024\nlr_base = 0.2\nwarmup_steps = 100\n"
      << "val_beam_size = 1\nbeam_size = 4\nalpha = 1.0\ndecode_max_len = 24\nthreads = 4\n";
  return cfg_path;
}

double masked_verb_accuracy(const std::vector<std::string>& hypotheses, const std::vector<std::size_t>& gold) {
  if (hypotheses.size() != gold.size()) throw Error("masked_verb_accuracy: size mismatch");
  if (hypotheses.empty()) throw Error("masked_verb_accuracy: no hypotheses");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    for (const auto& t : eval::tokenize(hypotheses[i])) {
      const int v = verb_of_target_token(t);
      if (v < 0) continue;
      if (static_cast<std::size_t>(v) == gold[i]) ++correct;
      break;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(hypotheses.size());
}

}  // namespace mmt::synth
