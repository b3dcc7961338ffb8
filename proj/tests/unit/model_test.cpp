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

#include <cmath>
#include <numbers>
#include <vector>

#include "test_support.hpp"
#include "tscil/data.hpp"
#include "tscil/error.hpp"
#include "tscil/model.hpp"
#include "tscil/optim.hpp"

using namespace tscil;
using tscil::testing::numeric_grad;
using tscil::testing::random_tensor;
using tscil::testing::relative_error;

namespace {

std::vector<TimeSeriesSample> synthetic(std::size_t classes = 4, std::size_t n = 10) {
  SyntheticConfig c;
  c.classes = classes;
  c.n_per_class = n;
  return make_synthetic(c, 21);
}

HeadBank bank_with(std::vector<std::vector<float>> rows, std::vector<ClassId> classes,
                   float s = 10.0f, float m = 0.1f) {
  HeadBank bank(s, m);
  const std::size_t d = rows.front().size();
  auto& h = bank.add_head(1, classes, d, 0);
  std::vector<float> flat;
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  h.weights = Tensor::from({rows.size(), d}, flat, true);
  return bank;
}

Tensor backbone_only(const ModelState& m, std::span<const TimeSeriesSample> xs) {
  Tensor h = m.backbone().embed(xs);
  for (std::size_t i = 0; i < m.backbone().n_blocks(); ++i) h = m.backbone().block(i, h);
  return group_mean(h, m.backbone().num_patches(xs.front().length()));
}

}  // namespace

TEST_CASE("adapter_forward: zero up-projection is the identity") {
  const Adapter a = Adapter::init(8, 2, 1.0f, 0.02f, 3);
  const Tensor x = random_tensor({5, 8}, 1);
  CHECK(bit_equal(adapter_forward(x, a), x));
}

TEST_CASE("adapter_forward: zero scale is the identity") {
  Adapter a = Adapter::init(8, 2, 0.0f, 0.02f, 3);
  a.up = random_tensor({2, 8}, 4);
  const Tensor x = random_tensor({5, 8}, 1);
  CHECK(bit_equal(adapter_forward(x, a), x));
}

TEST_CASE("adapter_forward: hand-evaluated scalar case") {
  Adapter a{Tensor::from({1, 1}, {2}), Tensor::from({1, 1}, {3}), 1.0f};
  CHECK(adapter_forward(Tensor::from({1, 1}, {1}), a)(0, 0) == 7.0f);
}

TEST_CASE("adapter_forward: dimension mismatch") {
  const Adapter a = Adapter::init(8, 2, 1.0f, 0.02f, 3);
  CHECK_THROWS_AS(adapter_forward(Tensor::zeros({2, 4}), a), DimensionError);
}

TEST_CASE("extract_features: identity adapters give backbone features") {
  const ModelState m(tscil::testing::small_model());
  const auto xs = synthetic();
  CHECK(bit_equal(m.features(xs), backbone_only(m, xs)));
}

TEST_CASE("extract_features: deterministic and class dependent") {
  const ModelState m(tscil::testing::small_model());
  const auto xs = synthetic();
  const Tensor a = extract_features(m, xs[0]);
  CHECK(a.shape() == Shape{16});
  CHECK(bit_equal(a, extract_features(m, xs[0])));
  const TimeSeriesSample* other = nullptr;
  for (const auto& s : xs)
    if (s.label != xs[0].label) other = &s;
  REQUIRE(other != nullptr);
  const Tensor b = extract_features(m, *other);
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d2 += (a(i) - b(i)) * (a(i) - b(i));
  CHECK(d2 > 0.0);
}

TEST_CASE("extract_all: chunked result equals one batch") {
  const ModelState m(tscil::testing::small_model());
  const auto xs = synthetic(4, 80);
  const Tensor all = extract_all(m, xs);
  CHECK(all.rows() == 320);
  const std::span<const TimeSeriesSample> tail(xs.data() + 300, 20);
  const Tensor part = m.features(tail);
  for (std::size_t j = 0; j < 16; ++j) CHECK(all(310, j) == part(10, j));
}

TEST_CASE("snapshot: equal outputs, then isolated from training") {
  ModelState m(tscil::testing::small_model());
  m.heads().add_head(1, {0, 1}, 16, 5);
  const auto xs = synthetic();
  const std::span<const TimeSeriesSample> batch(xs.data(), 8);
  const ModelState snap = m.snapshot();
  CHECK(bit_equal(snap.features(batch), m.features(batch)));

  const Tensor probe = snap.features(batch).clone();
  SgdConfig cfg;
  cfg.max_lr = 0.05f;
  OneCycleSgd opt(cfg, 10);
  auto params = m.adapter_parameters();
  for (int step = 0; step < 10; ++step) {
    const Tensor loss = loss_kd(Tensor::zeros({8, 16}), m.features(batch));
    const auto g = grad(loss, params);
    opt.step(params, g);
  }
  CHECK(bit_equal(snap.features(batch), probe));
  CHECK_FALSE(bit_equal(m.features(batch), probe));
  const ModelState later = m.snapshot();
  CHECK_FALSE(bit_equal(later.features(batch), snap.features(batch)));
}

TEST_CASE("cosine_logits: orthonormal heads") {
  const HeadBank bank = bank_with({{1, 0}, {0, 1}}, {0, 1});
  const Tensor l = cosine_logits(Tensor::from({2}, {1, 0}), bank);
  CHECK(l(0) == doctest::Approx(1.0));
  CHECK(l(1) == doctest::Approx(0.0));
}

TEST_CASE("cosine_logits: scale invariant and hand-evaluated") {
  const HeadBank bank = bank_with({{1, 0}}, {0});
  CHECK(cosine_logits(Tensor::from({2}, {1, 1}), bank)(0) ==
        doctest::Approx(1.0 / std::sqrt(2.0)));
  const HeadBank two = bank_with({{1, 2}, {-3, 1}}, {0, 1});
  const Tensor a = cosine_logits(Tensor::from({2}, {0.3f, 0.7f}), two);
  const Tensor b = cosine_logits(Tensor::from({2}, {3.0f, 7.0f}), two);
  for (std::size_t i = 0; i < 2; ++i) CHECK(a(i) == doctest::Approx(b(i)).epsilon(1e-6));
}

TEST_CASE("cosine_logits: columns follow ascending class id across heads") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {4, 7}, 2, 0).weights = Tensor::from({2, 2}, {1, 0, 0, 1});
  bank.add_head(2, {1, 2}, 2, 0).weights = Tensor::from({2, 2}, {-1, 0, 0, -1});
  const Tensor l = cosine_logits(Tensor::from({2}, {1, 0}), bank);
  // ascending ids 1, 2, 4, 7
  CHECK(l(0) == doctest::Approx(-1.0));
  CHECK(l(2) == doctest::Approx(1.0));
}

TEST_CASE("loss_cos: uniform two-class logits give ln 2") {
  const HeadBank bank = bank_with({{1, 0}, {1, 0}}, {0, 1});
  const std::vector<ClassId> y{1};
  const Tensor l = loss_cos(Tensor::from({1, 2}, {0.5f, 0.5f}), y, bank, 1.0f, 0.0f, 1);
  CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("loss_cos: hand-evaluated margin softmax") {
  // cosines (0.9, 0.1): logits (10*(0.9-0.1), 10*0.1) = (8, 1)
  const double phi = std::acos(0.9);
  const double psi = phi + std::acos(0.1);
  const HeadBank bank = bank_with({{1, 0}, {float(std::cos(psi)), float(std::sin(psi))}}, {0, 1});
  const std::vector<ClassId> y{0};
  const Tensor f = Tensor::from({1, 2}, {float(std::cos(phi)), float(std::sin(phi))});
  const Tensor l = loss_cos(f, y, bank, 10.0f, 0.1f, 1);
  CHECK(l.item() == doctest::Approx(std::log1p(std::exp(-7.0))).epsilon(1e-3));
  CHECK(l.item() == doctest::Approx(9.11e-4).epsilon(1e-2));
}

TEST_CASE("loss_cos: old heads receive exactly zero gradient") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {0, 1}, 8, 1);
  bank.add_head(2, {2, 3}, 8, 2);
  const auto params = bank.parameters();
  for (auto p : params) p.set_requires_grad(true);
  const Tensor f = random_tensor({4, 8}, 3, 1.0f, true);
  const std::vector<ClassId> y{2, 3, 3, 2};
  const auto g = grad(loss_cos(f, y, bank, 10.0f, 0.1f, 2), params);
  for (float v : g[0].data()) CHECK(v == 0.0f);
  bool nonzero = false;
  for (float v : g[1].data()) nonzero |= v != 0.0f;
  CHECK(nonzero);
}

TEST_CASE("loss_cos: label outside the task is a contract error") {
  const HeadBank bank = bank_with({{1, 0}, {0, 1}}, {0, 1});
  const std::vector<ClassId> y{5};
  CHECK_THROWS_AS(loss_cos(Tensor::from({1, 2}, {1, 0}), y, bank, 10.0f, 0.1f, 1), ContractError);
}

TEST_CASE("loss_cos and loss_cos_all: gradients match central differences") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {0, 1}, 8, 11);
  bank.add_head(2, {2, 3}, 8, 12);
  bank.set_trainable(true);
  Tensor f = random_tensor({5, 8}, 13, 1.0f, true);
  const std::vector<ClassId> y{2, 3, 2, 2, 3};
  Tensor w = bank.head_for_task(2).weights;
  auto local = [&] { return loss_cos(f, y, bank, 10.0f, 0.1f, 2); };
  const std::vector<Tensor> ps{f, w};
  auto g = grad(local(), ps);
  CHECK(relative_error(g[0].data(), numeric_grad(local, f)) < 1e-3);
  CHECK(relative_error(g[1].data(), numeric_grad(local, w)) < 1e-3);

  Tensor w1 = bank.head_for_task(1).weights;
  auto global = [&] { return loss_cos_all(f, y, bank, 10.0f, 0.1f); };
  const std::vector<Tensor> ps2{w1};
  g = grad(global(), ps2);
  CHECK(relative_error(g[0].data(), numeric_grad(global, w1)) < 1e-3);
}

TEST_CASE("loss_kd: identical models give zero") {
  ModelState m(tscil::testing::small_model());
  const auto xs = synthetic();
  CHECK(loss_kd(m.snapshot(), m, xs).item() == 0.0f);
}

TEST_CASE("loss_kd: constant extractors") {
  const tscil::testing::ConstantExtractor old_f({0, 0}), new_f({1, 1});
  const std::vector<TimeSeriesSample> batch{tscil::testing::dummy_sample()};
  CHECK(loss_kd(old_f, new_f, batch).item() == doctest::Approx(2.0));
}

TEST_CASE("loss_kd: invariant to batch order") {
  const Tensor a = random_tensor({6, 4}, 1), b = random_tensor({6, 4}, 2);
  std::vector<float> ra, rb;
  for (std::size_t i = 6; i-- > 0;) {
    for (std::size_t j = 0; j < 4; ++j) ra.push_back(a(i, j)), rb.push_back(b(i, j));
  }
  CHECK(loss_kd(a, b).item() ==
        doctest::Approx(loss_kd(Tensor::from({6, 4}, ra), Tensor::from({6, 4}, rb)).item()));
}

TEST_CASE("loss_kd: gradient through adapters matches central differences") {
  ModelConfig cfg = tscil::testing::small_model();
  cfg.embed_dim = 8;
  ModelState m(cfg);
  const ModelState old = m.snapshot();
  // Pre-activations well away from the relu kink, so central differences
  // do not straddle it.
  std::uint64_t k = 0;
  for (auto& a : m.adapters()) {
    a.up = random_tensor(a.up.shape(), 30 + k, 0.3f, true);
    a.down = random_tensor(a.down.shape(), 40 + k, 0.5f, true);
    ++k;
  }
  const auto xs = synthetic();
  const std::span<const TimeSeriesSample> batch(xs.data(), 6);
  auto f = [&] { return loss_kd(old, m, batch); };
  const auto params = m.adapter_parameters();
  const auto g = grad(f(), params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    CHECK(relative_error(g[i].data(), numeric_grad(f, p)) < 1e-3);
  }
}

TEST_CASE("loss_ce_unified: uniform, saturated and hand-evaluated cases") {
  const HeadBank zeros = bank_with({{0, 0}, {0, 0}, {0, 0}}, {0, 1, 2});
  const std::vector<std::size_t> y{1};
  CHECK(loss_ce_unified(Tensor::from({1, 2}, {1, 1}), y, zeros).item() ==
        doctest::Approx(std::log(3.0)).epsilon(1e-6));

  const HeadBank sat = bank_with({{1e6f, 0}, {0, 0}}, {0, 1});
  const std::vector<std::size_t> y0{0};
  CHECK(loss_ce_unified(Tensor::from({1, 2}, {1, 0}), y0, sat).item() == doctest::Approx(0.0));

  const HeadBank two = bank_with({{1, 0}, {0, 0}}, {0, 1});
  CHECK(loss_ce_unified(Tensor::from({1, 2}, {1, 0}), y0, two).item() ==
        doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-6));
}

TEST_CASE("loss_ce_unified: gradient matches central differences") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {3, 5}, 8, 1);
  bank.add_head(2, {0, 1}, 8, 2);
  bank.set_trainable(true);
  const Tensor f = random_tensor({6, 8}, 4);
  const std::vector<std::size_t> y{0, 1, 2, 3, 3, 1};
  const auto params = bank.parameters();
  auto fn = [&] { return loss_ce_unified(f, y, bank); };
  const auto g = grad(fn(), params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    CHECK(relative_error(g[i].data(), numeric_grad(fn, p)) < 1e-3);
  }
}

TEST_CASE("predict: singleton, self-similarity and scale invariance") {
  ModelState m(tscil::testing::small_model());
  const auto xs = synthetic();
  m.heads().add_head(1, {6}, 16, 0);
  CHECK(predict(m, xs[0]) == 6);
  CHECK(predict(m, xs[5]) == 6);

  const Tensor f = extract_features(m, xs[0]);
  auto& h = m.heads().add_head(2, {1, 2}, 16, 3);
  std::vector<float> w(h.weights.data().begin(), h.weights.data().end());
  std::copy(f.data().begin(), f.data().end(), w.begin() + 16);
  h.weights = Tensor::from({2, 16}, w);
  CHECK(predict(m, xs[0]) == 2);

  const Tensor batch = m.features(std::span<const TimeSeriesSample>(xs.data(), 10));
  CHECK(predict_from_features(batch, m.heads()) ==
        predict_from_features(scale(batch, 3.5f), m.heads()));
}

TEST_CASE("predict: ties resolve to the lowest class id") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {4, 9}, 2, 0).weights = Tensor::from({2, 2}, {1, 0, 1, 0});
  CHECK(predict_from_features(Tensor::from({1, 2}, {1, 1}), bank) == std::vector<ClassId>{4});
}

TEST_CASE("HeadBank: coverage and trainability") {
  HeadBank bank(10.0f, 0.1f);
  bank.add_head(1, {5, 2}, 4, 0);
  bank.add_head(2, {0, 3}, 4, 1);
  CHECK(bank.seen_classes() == std::vector<ClassId>{0, 2, 3, 5});
  CHECK(bank.seen_index(3) == 2);
  CHECK_THROWS_AS(bank.seen_index(7), ContractError);
  CHECK_THROWS_AS(bank.add_head(3, {3, 8}, 4, 2), ContractError);
  bank.set_trainable_only(2);
  CHECK_FALSE(bank.head_for_task(1).weights.requires_grad());
  CHECK(bank.head_for_task(2).weights.requires_grad());
}
