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

#include "mmtlab/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mmtlab/error.hpp"
#include "mmtlab/eval.hpp"
#include "mmtlab/mmtf.hpp"

namespace fs = std::filesystem;

namespace mmt::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size() || value.front() == '-') {
    throw FormatError("config key '" + key + "' expects a nonnegative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) throw FormatError("config key '" + key + "' expects a number, got '" + value + "'");
  return v;
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  auto out = open_out(path);
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<std::vector<int>> read_ids(const fs::path& path) {
  auto in = open_in(path);
  std::vector<std::vector<int>> rows;
  for (const auto& line : eval::read_lines(in)) {
    std::vector<int> row;
    std::istringstream ss(line);
    int v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof()) throw FormatError(path.string() + ": malformed id line");
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ids(const fs::path& path, const std::vector<std::vector<int>>& rows) {
  auto out = open_out(path);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << row[i];
    out << '\n';
  }
}

std::vector<bpe::Sentence> tokenized(const std::vector<std::string>& lines) {
  std::vector<bpe::Sentence> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(eval::tokenize(l));
  return out;
}

std::string missing_list(const fs::path& file, const std::vector<std::string>& missing) {
  std::string msg = file.string() + ": no features for segment ids ";
  const std::size_t shown = std::min<std::size_t>(missing.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) msg += (i ? ", " : "") + missing[i];
  if (missing.size() > shown) msg += " (and " + std::to_string(missing.size() - shown) + " more)";
  return msg;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_score(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

const std::vector<std::string>& canonical_setups() {
  static const std::vector<std::string> names{"text-only", "AIC-videosum", "AIF-videosum", "AIF-conv4", "AIF-emb"};
  return names;
}

const std::vector<std::string>& canonical_variants() {
  static const std::vector<std::string> names{"ORG", "ACT", "ALL"};
  return names;
}

Setup parse_setup(std::string_view name) {
  if (name == "text-only") return {"text-only", model::Mode::TextOnly, features::VisualKind::None};
  const auto dash = name.find('-');
  if (dash != std::string_view::npos) {
    const auto mode = name.substr(0, dash);
    const auto kind = name.substr(dash + 1);
    if (mode == "AIC" && kind == "videosum") return {std::string(name), model::Mode::AIC, features::VisualKind::Videosum};
    if (mode == "AIF" && (kind == "videosum" || kind == "conv4" || kind == "emb")) {
      return {std::string(name), model::Mode::AIF, features::parse_visual_kind(kind)};
    }
  }
  throw Error("unknown setup '" + std::string(name) + "' (expected one of " + join(canonical_setups(), ", ") + ")");
}

fs::path ExperimentConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::map<std::string, fs::path*> paths{
      {"train_source", &source["train"]}, {"val_source", &source["val"]},   {"test_source", &source["test"]},
      {"train_target", &target["train"]}, {"val_target", &target["val"]},   {"test_target", &target["test"]},
      {"train_ids", &ids["train"]},       {"val_ids", &ids["val"]},         {"test_ids", &ids["test"]},
      {"lexicon", &lexicon},              {"videosum_features", &videosum_features},
      {"conv4_features", &conv4_features}, {"emb_features", &emb_features},
      {"emb_posteriors", &emb_posteriors}, {"category_labels", &category_labels},
      {"label_embeddings", &label_embeddings}, {"reference_numbers", &reference_numbers},
      {"output_dir", &output_dir}};
  if (auto it = paths.find(key); it != paths.end()) {
    *it->second = resolve(value);
    return;
  }
  if (key == "seed") seed = to_size(key, value);
  else if (key == "variants") {
    variants.clear();
    for (const auto& v : split_list(value)) variants.emplace_back(masking::variant_name(masking::parse_variant(v)));
  } else if (key == "setups") {
    setups.clear();
    for (const auto& s : split_list(value)) setups.push_back(parse_setup(s).name);
  } else if (key == "placeholder") placeholder = value;
  else if (key == "source_merges") source_merges = to_size(key, value);
  else if (key == "target_merges") target_merges = to_size(key, value);
  else if (key == "videosum_dim") dims.videosum_dim = to_size(key, value);
  else if (key == "videosum_rows") dims.videosum_rows = to_size(key, value);
  else if (key == "conv4_grid") dims.conv4_grid = to_size(key, value);
  else if (key == "conv4_channels") dims.conv4_channels = to_size(key, value);
  else if (key == "emb_categories") dims.emb_categories = to_size(key, value);
  else if (key == "emb_dim") dims.emb_dim = to_size(key, value);
  else if (key == "layers") model.n_layers = to_size(key, value);
  else if (key == "heads") model.n_heads = to_size(key, value);
  else if (key == "model_dim") model.model_dim = to_size(key, value);
  else if (key == "ff_dim") model.ff_dim = to_size(key, value);
  else if (key == "dropout") model.dropout = to_double(key, value);
  else if (key == "max_len") model.max_len = to_size(key, value);
  else if (key == "max_epochs") training.max_epochs = to_size(key, value);
  else if (key == "patience") training.patience = to_size(key, value);
  else if (key == "batch_tokens") training.batch_tokens = to_size(key, value);
  else if (key == "lr_base") training.schedule.base_rate = to_double(key, value);
  else if (key == "warmup_steps") training.schedule.warmup_steps = static_cast<int>(to_size(key, value));
  else if (key == "val_beam_size") training.val_decode.beam_size = to_size(key, value);
  else if (key == "beam_size") test_decode.beam_size = to_size(key, value);
  else if (key == "alpha") test_decode.alpha = training.val_decode.alpha = to_double(key, value);
  else if (key == "decode_max_len") test_decode.max_len = training.val_decode.max_len = to_size(key, value);
  else if (key == "threads") test_decode.threads = training.val_decode.threads = std::max<std::size_t>(1, to_size(key, value));
  else throw FormatError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const fs::path& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.output_dir = c.resolve(c.output_dir);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(line_no) + ": expected key = value");
    try {
      c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw FormatError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  auto in = open_in(path);
  return parse(in, fs::absolute(path).parent_path());
}

void ExperimentConfig::validate() const {
  if (!seed) throw Error("config: a seed is required");
  if (variants.empty()) throw Error("config: no masking variants selected");
  if (setups.empty()) throw Error("config: no setups selected");
  dims.validate();
  for (auto split : kSplits) {
    const std::string s(split);
    for (const auto* m : {&source, &target, &ids}) {
      auto it = m->find(s);
      if (it == m->end() || it->second.empty()) {
        const char* what = m == &source ? "_source" : m == &target ? "_target" : "_ids";
        throw Error("config: " + s + what + " is not set");
      }
    }
  }
  const bool need_lexicon = std::find(variants.begin(), variants.end(), "ACT") != variants.end();
  if (need_lexicon && lexicon.empty()) throw Error("config: the ACT variant needs a lexicon");
  for (const auto& name : setups) {
    const auto s = parse_setup(name);
    auto cfg = model;
    cfg.mode = s.mode;
    cfg.visual_kind = s.kind;
    cfg.src_vocab = cfg.tgt_vocab = 8;
    cfg.set_visual_geometry(dims);
    cfg.validate();
    if (s.kind == features::VisualKind::Videosum && videosum_features.empty())
      throw Error("config: " + name + " needs videosum_features");
    if (s.kind == features::VisualKind::Conv4 && conv4_features.empty())
      throw Error("config: " + name + " needs conv4_features");
    if (s.kind == features::VisualKind::Emb && emb_features.empty() &&
        (emb_posteriors.empty() || category_labels.empty() || label_embeddings.empty())) {
      throw Error("config: " + name + " needs emb_features, or emb_posteriors with category_labels and label_embeddings");
    }
  }
}

std::string ExperimentConfig::canonical_text() const {
  std::ostringstream o;
  o << "seed = " << (seed ? std::to_string(*seed) : "") << '\n';
  for (auto split : kSplits) {
    const std::string s(split);
    o << s << "_source = " << source.at(s).string() << '\n'
      << s << "_target = " << target.at(s).string() << '\n'
      << s << "_ids = " << ids.at(s).string() << '\n';
  }
  o << "lexicon = " << lexicon.string() << '\n'
    << "videosum_features = " << videosum_features.string() << '\n'
    << "conv4_features = " << conv4_features.string() << '\n'
    << "emb_features = " << emb_features.string() << '\n'
    << "emb_posteriors = " << emb_posteriors.string() << '\n'
    << "category_labels = " << category_labels.string() << '\n'
    << "label_embeddings = " << label_embeddings.string() << '\n'
    << "videosum_dim = " << dims.videosum_dim << '\n'
    << "videosum_rows = " << dims.videosum_rows << '\n'
    << "conv4_grid = " << dims.conv4_grid << '\n'
    << "conv4_channels = " << dims.conv4_channels << '\n'
    << "emb_categories = " << dims.emb_categories << '\n'
    << "emb_dim = " << dims.emb_dim << '\n'
    << "variants = " << join(variants, ",") << '\n'
    << "setups = " << join(setups, ",") << '\n'
    << "placeholder = " << placeholder << '\n'
    << "source_merges = " << source_merges << '\n'
    << "target_merges = " << target_merges << '\n'
    << model.to_text()
    << "max_epochs = " << training.max_epochs << '\n'
    << "patience = " << training.patience << '\n'
    << "batch_tokens = " << training.batch_tokens << '\n'
    << "lr_base = " << exact(training.schedule.base_rate) << '\n'
    << "warmup_steps = " << training.schedule.warmup_steps << '\n'
    << "val_beam_size = " << training.val_decode.beam_size << '\n'
    << "beam_size = " << test_decode.beam_size << '\n'
    << "alpha = " << exact(test_decode.alpha) << '\n'
    << "decode_max_len = " << test_decode.max_len << '\n';
  return o.str();
}

void ResultsTable::write_table(std::ostream& out) const {
  out << std::left << std::setw(14) << "setup";
  for (const auto& v : variants) out << std::right << std::setw(8) << v;
  out << '\n';
  for (const auto& s : setups) {
    out << std::left << std::setw(14) << s;
    for (const auto& v : variants) {
      auto it = cells.find({s, v});
      out << std::right << std::setw(8) << (it == cells.end() ? std::string("-") : format_score(it->second));
    }
    out << '\n';
  }
}

void ResultsTable::write_jsonl(std::ostream& out) const {
  for (const auto& s : setups) {
    for (const auto& v : variants) {
      nlohmann::ordered_json j;
      j["setup"] = s;
      j["variant"] = v;
      auto it = cells.find({s, v});
      if (it == cells.end()) {
        j["bleu"] = nullptr;
      } else {
        j["bleu"] = it->second;
        j["hypotheses"] = hypothesis_files.at({s, v});
      }
      out << j.dump() << '\n';
    }
  }
}

Manifest::Manifest(fs::path path, std::string fingerprint) : path_(std::move(path)), fingerprint_(std::move(fingerprint)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  if (!std::getline(in, line)) return;
  if (line != "fingerprint\t" + fingerprint_) {
    throw StageError("manifest", path_.string() +
                                     " belongs to a run with a different configuration; use a fresh output directory");
  }
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos && line.substr(tab + 1) == "done") stages_.insert(line.substr(0, tab));
  }
}

void Manifest::mark(const std::string& stage) {
  stages_.insert(stage);
  save();
}

void Manifest::save() const {
  fs::create_directories(path_.parent_path());
  const auto tmp = fs::path(path_.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw StageError("manifest", "cannot write " + tmp.string());
    out << "fingerprint\t" << fingerprint_ << '\n';
    for (const auto& s : stages_) out << s << "\tdone\n";
  }
  fs::rename(tmp, path_);
}

Pipeline::Pipeline(ExperimentConfig config, std::ostream* log)
    : config_((config.validate(), std::move(config))),
      log_(log),
      manifest_(config_.output_dir / "manifest.tsv", hex(fnv1a(config_.canonical_text()))) {}

void Pipeline::note(const std::string& message) const {
  if (log_) *log_ << "mmtlab: " << message << '\n' << std::flush;
}

template <typename F>
void Pipeline::stage(const std::string& name, F&& body) {
  if (manifest_.done(name)) {
    note("skip " + name + " (done)");
    return;
  }
  note("run " + name);
  try {
    body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
  manifest_.mark(name);
}

std::vector<std::string> Pipeline::segment_ids(const std::string& split) const {
  auto ids = eval::read_lines(config_.ids.at(split).string());
  for (auto& id : ids) id = trim(id);
  return ids;
}

std::vector<std::string> Pipeline::reference_lines(const std::string& split) const {
  return eval::read_lines(config_.target.at(split).string());
}

bpe::BpeModel Pipeline::load_bpe(const std::string& name) const {
  auto in = open_in(out("bpe/" + name + ".bpe"));
  return bpe::BpeModel::load(in);
}

bool Pipeline::is_visual(const std::string& setup) const { return parse_setup(setup).mode != model::Mode::TextOnly; }

void Pipeline::run_mask() {
  for (const auto& variant : config_.variants) {
    stage("mask/" + variant, [&] {
      const auto v = masking::parse_variant(variant);
      masking::ActionLexicon lexicon;
      if (!config_.lexicon.empty()) {
        auto in = open_in(config_.lexicon);
        lexicon = masking::read_lexicon(in);
      }
      for (auto split : kSplits) {
        const std::string s(split);
        auto in = open_in(config_.source.at(s));
        const auto corpus = masking::read_annotated_corpus(in);
        std::vector<std::string> lines;
        lines.reserve(corpus.size());
        for (const auto& sentence : corpus) lines.push_back(join(masking::mask(sentence, v, lexicon, config_.placeholder), " "));
        write_lines(out("masked/" + variant + "." + s + ".txt"), lines);
      }
    });
  }
}

void Pipeline::run_bpe() {
  run_mask();
  stage("bpe/target", [&] {
    const auto model = bpe::learn_merges(tokenized(reference_lines("train")), config_.target_merges,
                                         {config_.placeholder});
    auto o = open_out(out("bpe/target.bpe"));
    model.save(o);
  });
  for (const auto& variant : config_.variants) {
    stage("bpe/" + variant, [&] {
      const auto lines = eval::read_lines(out("masked/" + variant + ".train.txt").string());
      const auto model = bpe::learn_merges(tokenized(lines), config_.source_merges, {config_.placeholder});
      auto o = open_out(out("bpe/" + variant + ".bpe"));
      model.save(o);
    });
  }
}

void Pipeline::run_encode() {
  run_bpe();
  auto encode_lines = [&](const bpe::BpeModel& model, const std::vector<std::string>& lines, const fs::path& path) {
    std::vector<std::vector<int>> rows;
    rows.reserve(lines.size());
    for (const auto& l : lines) rows.push_back(model.encode(eval::tokenize(l)));
    write_ids(path, rows);
  };
  stage("encode/target", [&] {
    const auto model = load_bpe("target");
    for (auto split : kSplits) {
      const std::string s(split);
      const auto refs = reference_lines(s);
      const auto ids = segment_ids(s);
      if (refs.size() != ids.size()) {
        throw Error(config_.target.at(s).string() + " has " + std::to_string(refs.size()) + " lines but " +
                    config_.ids.at(s).string() + " has " + std::to_string(ids.size()));
      }
      encode_lines(model, refs, out("encoded/target." + s + ".ids"));
    }
  });
  for (const auto& variant : config_.variants) {
    stage("encode/" + variant, [&] {
      const auto model = load_bpe(variant);
      for (auto split : kSplits) {
        const std::string s(split);
        const auto lines = eval::read_lines(out("masked/" + variant + "." + s + ".txt").string());
        const auto ids = segment_ids(s);
        if (lines.size() != ids.size()) {
          throw Error(config_.source.at(s).string() + " has " + std::to_string(lines.size()) + " sentences but " +
                      config_.ids.at(s).string() + " has " + std::to_string(ids.size()));
        }
        encode_lines(model, lines, out("encoded/" + variant + "." + s + ".ids"));
      }
    });
  }
}

std::vector<Tensor> Pipeline::visual_inputs(const Setup& setup, const std::string& split) const {
  const auto ids = segment_ids(split);
  const bool attention = setup.mode == model::Mode::AIF;
  const auto& dims = config_.dims;
  std::vector<Tensor> out;
  out.reserve(ids.size());

  auto check_missing = [&](const mmtf::FeatureFile& file) {
    std::vector<std::string> missing;
    for (const auto& id : ids)
      if (!file.contains(id)) missing.push_back(id);
    if (!missing.empty()) throw StageError("features", missing_list(file.path(), missing));
  };
  auto convert = [&](const std::string& id, const features::VisualFeature& feature) {
    try {
      return features::model_input(feature, dims, attention);
    } catch (const Error& e) {
      throw StageError("features", "segment '" + id + "': " + e.what());
    }
  };

  if (setup.kind == features::VisualKind::Emb && config_.emb_features.empty()) {
    const mmtf::FeatureFile file(config_.emb_posteriors);
    check_missing(file);
    const auto labels = eval::read_lines(config_.category_labels.string());
    auto table_in = open_in(config_.label_embeddings);
    const auto table = features::LabelEmbeddingTable::load_text(table_in);
    for (const auto& id : ids) {
      const auto raw = file.read(id);
      features::CategoryPosterior posterior{std::vector<double>(raw.storage().begin(), raw.storage().end())};
      try {
        out.push_back(convert(id, features::build_emb_feature(posterior, labels, table)));
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError("features", "segment '" + id + "': " + e.what());
      }
    }
    return out;
  }

  const fs::path path = setup.kind == features::VisualKind::Videosum ? config_.videosum_features
                        : setup.kind == features::VisualKind::Conv4  ? config_.conv4_features
                                                                     : config_.emb_features;
  const mmtf::FeatureFile file(path);
  check_missing(file);
  for (const auto& id : ids) {
    features::VisualFeature feature;
    try {
      feature = features::from_raw(setup.kind, file.read(id), dims);
    } catch (const Error& e) {
      throw StageError("features", "segment '" + id + "': " + e.what());
    }
    out.push_back(convert(id, feature));
  }
  return out;
}

model::ModelConfig Pipeline::model_config(const Setup& setup, const std::string& variant) const {
  auto cfg = config_.model;
  cfg.mode = setup.mode;
  cfg.visual_kind = setup.kind;
  cfg.src_vocab = load_bpe(variant).vocab_size();
  cfg.tgt_vocab = load_bpe("target").vocab_size();
  cfg.set_visual_geometry(config_.dims);
  cfg.validate();
  return cfg;
}

std::vector<train::Example> Pipeline::examples(const Setup& setup, const std::string& variant,
                                               const std::string& split) const {
  const auto ids = segment_ids(split);
  auto sources = read_ids(out("encoded/" + variant + "." + split + ".ids"));
  auto targets = read_ids(out("encoded/target." + split + ".ids"));
  if (sources.size() != ids.size() || targets.size() != ids.size()) {
    throw Error("encoded " + split + " files do not match " + config_.ids.at(split).string());
  }
  std::vector<Tensor> visual;
  if (setup.mode != model::Mode::TextOnly) visual = visual_inputs(setup, split);
  std::vector<train::Example> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (sources[i].empty()) throw Error("segment '" + ids[i] + "' has an empty source sentence");
    if (sources[i].size() > config_.model.max_len) {
      throw Error("segment '" + ids[i] + "': source has " + std::to_string(sources[i].size()) +
                  " subwords, more than max_len " + std::to_string(config_.model.max_len));
    }
    train::Example ex{ids[i], std::move(sources[i]), std::move(targets[i]), std::nullopt};
    if (!visual.empty()) ex.visual = std::move(visual[i]);
    out.push_back(std::move(ex));
  }
  return out;
}

void Pipeline::run_train() {
  run_encode();
  for (const auto& setup_name : config_.setups) {
    for (const auto& variant : config_.variants) {
      const std::string cell = setup_name + "." + variant;
      stage("train/" + setup_name + "/" + variant, [&] {
        const auto setup = parse_setup(setup_name);
        const auto cfg = model_config(setup, variant);
        auto train_set = examples(setup, variant, "train");
        const std::size_t before = train_set.size();
        std::erase_if(train_set, [&](const train::Example& ex) { return ex.target.size() + 1 > cfg.max_len; });
        if (train_set.size() != before) {
          note("dropped " + std::to_string(before - train_set.size()) + " training pairs longer than max_len");
        }
        const auto val_set = examples(setup, variant, "val");
        auto options = config_.training;
        options.seed = *config_.seed;
        options.schedule.model_dim = static_cast<int>(cfg.model_dim);
        auto log = open_out(out("logs/" + cell + ".jsonl"));
        const auto result = train::train(cfg, train_set, val_set, reference_lines("val"), load_bpe("target"), options,
                                         [&](const train::EpochRecord& r) {
                                           log << train::to_json_line(r) << '\n' << std::flush;
                                           note(cell + " epoch " + std::to_string(r.epoch) + " loss " +
                                                format_score(r.loss) + " val BLEU " + format_score(r.val_bleu));
                                         });
        fs::create_directories(out("models"));
        train::save_checkpoint(out("models/" + cell + ".ckpt"), cfg, result.best_params);
      });
    }
  }
}

void Pipeline::run_translate() {
  run_train();
  for (const auto& setup_name : config_.setups) {
    for (const auto& variant : config_.variants) {
      const std::string cell = setup_name + "." + variant;
      stage("translate/" + setup_name + "/" + variant, [&] {
        const auto model = train::load_checkpoint(out("models/" + cell + ".ckpt")).instantiate();
        const auto test = examples(parse_setup(setup_name), variant, "test");
        write_lines(out("hyps/" + cell + ".txt"),
                    train::translate_examples(model, test, load_bpe("target"), config_.test_decode));
      });
    }
  }
}

ResultsTable Pipeline::run_evaluate() {
  run_translate();
  ResultsTable table;
  for (const auto& s : canonical_setups())
    if (std::find(config_.setups.begin(), config_.setups.end(), s) != config_.setups.end()) table.setups.push_back(s);
  for (const auto& v : canonical_variants())
    if (std::find(config_.variants.begin(), config_.variants.end(), v) != config_.variants.end()) table.variants.push_back(v);
  try {
    const auto refs = reference_lines("test");
    for (const auto& s : table.setups) {
      for (const auto& v : table.variants) {
        const std::string rel = "hyps/" + s + "." + v + ".txt";
        table.cells[{s, v}] = eval::bleu(eval::read_lines(out(rel).string()), refs);
        table.hypothesis_files[{s, v}] = rel;
      }
    }
    auto txt = open_out(out("results.txt"));
    table.write_table(txt);
    auto jsonl = open_out(out("results.jsonl"));
    table.write_jsonl(jsonl);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError("evaluate", e.what());
  }
  return table;
}

probe::ProbeReport Pipeline::run_probe() {
  run_translate();
  probe::ProbeReport report;
  for (const auto& s : canonical_setups()) {
    if (std::find(config_.setups.begin(), config_.setups.end(), s) == config_.setups.end() || !is_visual(s)) continue;
    for (const auto& v : canonical_variants()) {
      if (std::find(config_.variants.begin(), config_.variants.end(), v) == config_.variants.end()) continue;
      const std::string cell = s + "." + v;
      stage("probe/" + s + "/" + v, [&] {
        const auto model = train::load_checkpoint(out("models/" + cell + ".ckpt")).instantiate();
        const auto test = examples(parse_setup(s), v, "test");
        const auto result = probe::probe(model, test, reference_lines("test"), load_bpe("target"), config_.test_decode);
        if (result.congruent_lines != eval::read_lines(out("hyps/" + cell + ".txt").string())) {
          throw Error("congruent probe decode differs from hyps/" + cell + ".txt");
        }
        write_lines(out("hyps/" + cell + ".incongruent.txt"), result.incongruent_lines);
      });
      try {
        const auto refs = reference_lines("test");
        probe::ProbeEntry e{s, v, eval::bleu(eval::read_lines(out("hyps/" + cell + ".txt").string()), refs),
                            eval::bleu(eval::read_lines(out("hyps/" + cell + ".incongruent.txt").string()), refs), 0.0};
        e.delta = e.incongruent_bleu - e.congruent_bleu;
        report.entries.push_back(e);
      } catch (const std::exception& e) {
        throw StageError("probe", e.what());
      }
    }
  }
  if (!report.entries.empty()) {
    auto txt = open_out(out("probe.txt"));
    report.write_table(txt);
    auto jsonl = open_out(out("probe.jsonl"));
    report.write_jsonl(jsonl);
  }
  return report;
}

void Pipeline::run_all() {
  run_evaluate();
  run_probe();
}

std::string Pipeline::report() const {
  std::ostringstream o;
  auto slurp = [&](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw StageError("report", "missing " + p.string() + "; run the pipeline first");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  };
  o << "BLEU on the test set\n" << slurp(out("results.txt"));
  if (std::any_of(config_.setups.begin(), config_.setups.end(), [&](const auto& s) { return is_visual(s); })) {
    o << "\nIncongruent decoding (delta = incongruent - congruent)\n" << slurp(out("probe.txt"));
  }
  if (!config_.reference_numbers.empty()) {
    const auto ref = ReferenceNumbers::load(config_.reference_numbers);
    o << "\nPublished reference numbers (full How2 data, large models; not reproduced here)\n";
    for (const char* kind : {"bleu", "delta"}) {
      o << (std::string_view(kind) == "bleu" ? "BLEU\n" : "incongruent delta\n");
      o << std::left << std::setw(14) << "setup";
      for (const auto& v : canonical_variants()) o << std::right << std::setw(8) << v;
      o << '\n';
      for (const auto& s : canonical_setups()) {
        bool any = false;
        for (const auto& v : canonical_variants()) any = any || ref.get(kind, s, v).has_value();
        if (!any) continue;
        o << std::left << std::setw(14) << s;
        for (const auto& v : canonical_variants()) {
          const auto x = ref.get(kind, s, v);
          std::string cell = x ? format_score(*x) : "-";
          if (x && std::string_view(kind) == "delta" && *x > 0) cell = "+" + cell;
          o << std::right << std::setw(8) << cell;
        }
        o << '\n';
      }
    }
  }
  return o.str();
}

ReferenceNumbers ReferenceNumbers::load(const fs::path& path) {
  auto in = open_in(path);
  ReferenceNumbers r;
  std::size_t line_no = 0;
  for (const auto& line : eval::read_lines(in)) {
    ++line_no;
    if (trim(line).empty() || line.front() == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    if (f.size() != 4) throw FormatError(path.string() + " line " + std::to_string(line_no) + ": expected 4 fields");
    r.values[{f[0], f[1], f[2]}] = to_double("value", f[3]);
  }
  return r;
}

std::optional<double> ReferenceNumbers::get(const std::string& kind, const std::string& setup,
                                            const std::string& variant) const {
  auto it = values.find({kind, setup, variant});
  if (it == values.end()) return std::nullopt;
  return it->second;
}

}  // namespace mmt::pipeline
