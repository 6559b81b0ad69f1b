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

#include "mmtlab/probe.hpp"

#include <iomanip>
#include <ostream>

#include "json.hpp"
#include "mmtlab/eval.hpp"

namespace mmt::probe {

ProbeResult probe(const model::Transformer& model, const std::vector<train::Example>& test_set,
                  const std::vector<std::string>& references, const bpe::BpeModel& target_bpe,
                  const decode::DecodeOptions& options) {
  if (model.config().mode == model::Mode::TextOnly) throw Error("probe is undefined for a text-only model");
  std::vector<std::optional<Tensor>> features;
  features.reserve(test_set.size());
  for (const auto& ex : test_set) features.push_back(ex.visual);
  auto swapped = test_set;
  const auto reversed = make_incongruent(features);
  for (std::size_t i = 0; i < swapped.size(); ++i) swapped[i].visual = reversed[i];

  ProbeResult r;
  r.congruent_lines = train::translate_examples(model, test_set, target_bpe, options);
  r.incongruent_lines = train::translate_examples(model, swapped, target_bpe, options);
  r.congruent_bleu = eval::bleu(r.congruent_lines, references);
  r.incongruent_bleu = eval::bleu(r.incongruent_lines, references);
  r.delta = r.incongruent_bleu - r.congruent_bleu;
  return r;
}

void ProbeReport::write_table(std::ostream& out) const {
  out << std::left << std::setw(14) << "setup" << std::setw(8) << "variant" << std::right << std::setw(11)
      << "congruent" << std::setw(13) << "incongruent" << std::setw(9) << "delta" << '\n';
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(2);
  for (const auto& e : entries) {
    out << std::left << std::setw(14) << e.setup << std::setw(8) << e.variant << std::right << std::setw(11)
        << e.congruent_bleu << std::setw(13) << e.incongruent_bleu << std::setw(9) << std::showpos << e.delta
        << std::noshowpos << '\n';
  }
  out.flags(flags);
}

void ProbeReport::write_jsonl(std::ostream& out) const {
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["setup"] = e.setup;
    j["variant"] = e.variant;
    j["congruent_bleu"] = e.congruent_bleu;
    j["incongruent_bleu"] = e.incongruent_bleu;
    j["delta"] = e.delta;
    out << j.dump() << '\n';
  }
}

}  // namespace mmt::probe
