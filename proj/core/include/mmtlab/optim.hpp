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

#include <cstdint>
#include <map>
#include <string>

#include "mmtlab/autodiff.hpp"
#include "mmtlab/tensor.hpp"

namespace mmt::optim {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

struct AdamState {
  std::uint64_t step_count = 0;
  Tensor first_moment;
  Tensor second_moment;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;

  static AdamState fresh(const Tensor& param, const AdamHyper& hyper = {});
};

/// One bias-corrected Adam update of param in place.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr);

/// Inverse square root decay with linear warmup:
///   base_rate * model_dim^-0.5 * min(step^-0.5, step * warmup^-1.5)
struct LrSchedule {
  double base_rate = 0.05;
  int model_dim = 1024;
  int warmup_steps = 4000;
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

/// Adam over a named parameter set; keeps one state per name.
class Adam {
 public:
  explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(std::map<std::string, ad::Var>& params, double lr);
  std::uint64_t steps_taken() const noexcept { return steps_; }

 private:
  AdamHyper hyper_;
  std::map<std::string, AdamState> states_;
  std::uint64_t steps_ = 0;
};

}  // namespace mmt::optim
