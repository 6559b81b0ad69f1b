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

#include "mmtlab/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mmtlab/error.hpp"

namespace mmt::optim {

AdamState AdamState::fresh(const Tensor& param, const AdamHyper& hyper) {
  AdamState s;
  s.first_moment = Tensor::zeros_like(param);
  s.second_moment = Tensor::zeros_like(param);
  s.beta1 = hyper.beta1;
  s.beta2 = hyper.beta2;
  s.epsilon = hyper.epsilon;
  return s;
}

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr) {
  if (param.shape() != grad.shape()) {
    throw Error("adam_step: gradient shape " + shape_string(grad.shape()) + " does not match parameter " +
                shape_string(param.shape()));
  }
  if (state.first_moment.empty()) state.first_moment = Tensor::zeros_like(param);
  if (state.second_moment.empty()) state.second_moment = Tensor::zeros_like(param);
  if (state.first_moment.shape() != param.shape() || state.second_moment.shape() != param.shape()) {
    throw Error("adam_step: moment shapes do not match parameter " + shape_string(param.shape()));
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

double lr_at(const LrSchedule& schedule, std::int64_t step) {
  if (step < 1) throw Error("lr_at: step must be >= 1, got " + std::to_string(step));
  if (schedule.model_dim <= 0 || schedule.warmup_steps <= 0) throw Error("lr_at: invalid schedule");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(schedule.warmup_steps);
  return schedule.base_rate / std::sqrt(static_cast<double>(schedule.model_dim)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

void Adam::step(std::map<std::string, ad::Var>& params, double lr) {
  ++steps_;
  for (auto& [name, var] : params) {
    auto it = states_.find(name);
    if (it == states_.end()) it = states_.emplace(name, AdamState::fresh(var.value(), hyper_)).first;
    adam_step(var.mutable_value(), var.grad(), it->second, lr);
  }
}

}  // namespace mmt::optim
