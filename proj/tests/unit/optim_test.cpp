// Copyright 2026 The tscil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <vector>

#include "test_support.hpp"
#include "tscil/error.hpp"
#include "tscil/optim.hpp"

using namespace tscil;

TEST_CASE("sgd_step: zero learning rate leaves params unchanged") {
  std::vector<Tensor> p{tscil::testing::random_tensor({3, 2}, 1, 1.0f, true)};
  const Tensor before = p[0].clone();
  const std::vector<Tensor> g{tscil::testing::random_tensor({3, 2}, 2)};
  MomentumState st{0.9f, {}};
  sgd_step(p, g, 0.0f, st);
  CHECK(bit_equal(p[0], before));
}

TEST_CASE("sgd_step: plain step") {
  std::vector<Tensor> p{Tensor::from({1}, {1.0f}, true)};
  const std::vector<Tensor> g{Tensor::from({1}, {2.0f})};
  MomentumState st;
  sgd_step(p, g, 0.1f, st);
  CHECK(p[0](0) == doctest::Approx(0.8));
}

TEST_CASE("sgd_step: momentum accumulates velocity") {
  std::vector<Tensor> p{Tensor::from({1}, {0.0f}, true)};
  const std::vector<Tensor> g{Tensor::from({1}, {1.0f})};
  MomentumState st{0.5f, {}};
  sgd_step(p, g, 1.0f, st);  // v = 1
  sgd_step(p, g, 1.0f, st);  // v = 1.5
  CHECK(p[0](0) == doctest::Approx(-2.5));
}

TEST_CASE("sgd_step: frozen tensor keeps its bit pattern") {
  std::vector<Tensor> p{tscil::testing::random_tensor({4}, 3)};
  const Tensor before = p[0].clone();
  const std::vector<Tensor> g{Tensor::full({4}, 1.0f)};
  MomentumState st{0.9f, {}};
  sgd_step(p, g, 0.5f, st);
  CHECK(bit_equal(p[0], before));
}

TEST_CASE("sgd_step: shape mismatch is a contract error") {
  std::vector<Tensor> p{Tensor::zeros({2}, true)};
  const std::vector<Tensor> g{Tensor::zeros({3})};
  MomentumState st;
  CHECK_THROWS_AS(sgd_step(p, g, 0.1f, st), ContractError);
}

TEST_CASE("onecycle_lr: start, peak and end") {
  const float max_lr = 0.01f;
  CHECK(onecycle_lr(0, 100, max_lr) == doctest::Approx(max_lr / 25.0f));
  CHECK(onecycle_lr(30, 100, max_lr) == max_lr);
  CHECK(onecycle_lr(99, 100, max_lr) == doctest::Approx(max_lr / 25e3f));
  CHECK(onecycle_lr(0, 1, max_lr) == doctest::Approx(max_lr / 25.0f));
}

TEST_CASE("onecycle_lr: rises then falls") {
  float prev = 0.0f;
  for (std::size_t s = 0; s <= 30; ++s) {
    const float lr = onecycle_lr(s, 100, 1.0f);
    CHECK(lr >= prev);
    prev = lr;
  }
  for (std::size_t s = 31; s < 100; ++s) {
    const float lr = onecycle_lr(s, 100, 1.0f);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("onecycle_lr: step out of range is a contract error") {
  CHECK_THROWS_AS(onecycle_lr(100, 100, 0.1f), ContractError);
  CHECK_THROWS_AS(onecycle_lr(0, 0, 0.1f), ContractError);
}

TEST_CASE("SgdConfig: validation") {
  SgdConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_lr = 0.0f;
  CHECK_THROWS_AS(c.validate(), ContractError);
  c.max_lr = 0.1f;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("OneCycleSgd: follows the schedule") {
  SgdConfig c;
  c.max_lr = 0.2f;
  OneCycleSgd opt(c, 10);
  std::vector<Tensor> p{Tensor::zeros({1}, true)};
  const std::vector<Tensor> g{Tensor::zeros({1})};
  for (std::size_t s = 0; s < 10; ++s) {
    CHECK(opt.current_lr() == onecycle_lr(s, 10, 0.2f));
    opt.step(p, g);
  }
  CHECK(opt.steps_taken() == 10);
}
