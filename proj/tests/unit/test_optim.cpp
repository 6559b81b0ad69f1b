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

#include <cmath>

#include "doctest.h"
#include "mmtlab/error.hpp"
#include "mmtlab/optim.hpp"

using mmt::Tensor;
namespace optim = mmt::optim;

TEST_CASE("first Adam step moves each weight by lr against the gradient sign") {
  Tensor p = Tensor::vector({1.0, -2.0, 0.5});
  const Tensor g = Tensor::vector({0.3, -4.0, 1e-3});
  auto state = optim::AdamState::fresh(p);
  optim::adam_step(p, g, state, 0.01);
  // bias correction makes the first update lr * g / (|g| + eps')
  CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(p[2] == doctest::Approx(0.5 - 0.01).epsilon(1e-5));
  CHECK(state.step_count == 1);
}

TEST_CASE("Adam matches a scalar recurrence written out by hand") {
  Tensor p = Tensor::vector({0.0});
  auto state = optim::AdamState::fresh(p);
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2.0 * (x - 3.0);
    optim::adam_step(p, Tensor::vector({2.0 * (p[0] - 3.0)}), state, 0.1);
    m = 0.9 * m + 0.1 * g;
    v = 0.98 * v + 0.02 * g * g;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.98, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-9);
    CHECK(p[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("Adam rejects mismatched gradient shapes") {
  Tensor p = Tensor::vector({0.0, 1.0});
  auto state = optim::AdamState::fresh(p);
  CHECK_THROWS_AS(optim::adam_step(p, Tensor::vector({1.0}), state, 0.1), mmt::Error);
}

TEST_CASE("learning rate warms up linearly then decays as the inverse square root") {
  const optim::LrSchedule s{0.05, 1024, 4000};
  const double peak = 0.05 / 32.0 / std::sqrt(4000.0);
  CHECK(optim::lr_at(s, 4000) == doctest::Approx(peak));
  CHECK(optim::lr_at(s, 2000) == doctest::Approx(peak / 2));
  CHECK(optim::lr_at(s, 16000) == doctest::Approx(peak / 2));
  for (std::int64_t step = 1; step < 4000; step += 97) CHECK(optim::lr_at(s, step) < optim::lr_at(s, step + 1));
  for (std::int64_t step = 4000; step < 20000; step += 997) CHECK(optim::lr_at(s, step) > optim::lr_at(s, step + 1));
  CHECK_THROWS_AS(optim::lr_at(s, 0), mmt::Error);
}
