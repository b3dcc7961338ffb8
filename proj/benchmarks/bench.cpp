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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tscil/data.hpp"
#include "tscil/dcn.hpp"
#include "tscil/model.hpp"
#include "tscil/optim.hpp"
#include "tscil/prototypes.hpp"
#include "tscil/tensor.hpp"

namespace {

using namespace tscil;

Tensor gaussian(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<TimeSeriesSample> batch_of(std::size_t n) {
  SyntheticConfig c;
  c.classes = 2;
  c.n_per_class = std::max<std::size_t>(8, n / 2);
  auto xs = make_synthetic(c, 1);
  xs.resize(n);
  return xs;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = gaussian({n, n}, 1), b = gaussian({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ExtractFeatures(benchmark::State& state) {
  const ModelState m(ModelConfig{});
  const auto xs = batch_of(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(extract_all(m, xs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExtractFeatures)->Arg(16)->Arg(128);

// One stage-1 style step: forward, L_cos + L_kd, backward, SGD update.
void BM_TrainStep(benchmark::State& state) {
  ModelState m(ModelConfig{});
  const ModelState old = m.snapshot();
  m.heads().add_head(1, {0, 1}, m.feature_dim(), 3);
  m.set_adapters_trainable(true);
  m.heads().set_trainable(true);
  const auto xs = batch_of(16);
  std::vector<ClassId> y;
  for (const auto& x : xs) y.push_back(x.label);
  auto params = m.adapter_parameters();
  for (const auto& p : m.heads().parameters()) params.push_back(p);
  MomentumState mom{0.9f, {}};
  for (auto _ : state) {
    const Tensor f = m.features(xs);
    const Tensor loss = add(loss_cos(f, y, m.heads(), 10.0f, 0.1f, 1),
                            scale(loss_kd(old.features(xs), f), 0.1f));
    const auto g = grad(loss, params);
    sgd_step(params, g, 1e-4f, mom);
  }
}
BENCHMARK(BM_TrainStep);

void BM_DcnStage2(benchmark::State& state) {
  const ModelState old(ModelConfig{});
  ModelConfig c;
  c.seed = 5;
  const ModelState now(c);
  const auto xs = batch_of(64);
  SgdConfig sgd;
  sgd.epochs_per_stage = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(train_stage2(dcn_init(old.feature_dim()), old, now, xs, sgd, 1));
}
BENCHMARK(BM_DcnStage2);

void BM_SampleFeatures(benchmark::State& state) {
  const ModelState m(ModelConfig{});
  const auto protos = compute_prototypes(m, batch_of(64), 1);
  for (auto _ : state) benchmark::DoNotOptimize(sample_features(protos.front(), 256, 7));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_SampleFeatures);

}  // namespace

BENCHMARK_MAIN();
