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

// Constructed verb-from-feature translation task.
//
// Subject, object and template are drawn independently of the verb, so once
// the verb is masked the source text says nothing about it. The emb posterior
// is one-hot on the verb; videosum and conv4 carry a noisy per-verb pattern.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mmtlab/features.hpp"
#include "mmtlab/masking.hpp"
#include "mmtlab/tensor.hpp"

namespace mmt::synth {

struct SynthVerb {
  std::string lemma;
  std::string third_person;
  std::string gerund;
  std::string target_finite;
  std::string target_infinitive;
  std::string target_gerund;
};

const std::vector<SynthVerb>& verbs();

/// Index of the verb a target token expresses, or -1.
int verb_of_target_token(std::string_view token);

struct SynthOptions {
  std::size_t n_sentences = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  std::uint64_t seed = 7;
  double noise = 0.5;  // sd of the noise on videosum/conv4 patterns
  features::FeatureDims dims{32, 4, 2, 8, 8, 16};
};

struct SynthSplit {
  std::vector<std::string> ids;
  std::vector<masking::AnnotatedSentence> source;
  std::vector<std::string> target;
  std::vector<std::size_t> verb;
};

struct SynthData {
  std::map<std::string, SynthSplit> splits;  // train, val, test
  std::map<std::string, Tensor> videosum;     // segment id -> vector
  std::map<std::string, Tensor> conv4;        // segment id -> grid x grid x channels
  std::map<std::string, Tensor> posterior;    // segment id -> one-hot vector
  std::vector<std::string> labels;            // category labels, verb order
  std::map<std::string, std::vector<double>> label_vectors;
};

SynthData generate(const SynthOptions& options);

/// Writes corpora, ids, lexicon, feature files and experiment.cfg into dir.
/// Returns the config path.
std::filesystem::path write_dataset(const SynthData& data, const SynthOptions& options,
                                    const std::filesystem::path& dir);

/// Share of hypotheses whose first verb token names the gold verb.
double masked_verb_accuracy(const std::vector<std::string>& hypotheses, const std::vector<std::size_t>& gold);

}  // namespace mmt::synth
