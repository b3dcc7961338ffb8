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

#include "tscil/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "tscil/error.hpp"

namespace tscil {

void SgdConfig::validate() const {
  require(max_lr > 0.0f, "SgdConfig: max_lr must be positive");
  require(batch_size >= 1, "SgdConfig: batch_size must be at least 1");
  require(momentum >= 0.0f && momentum < 1.0f, "SgdConfig: momentum must be in [0, 1)");
}

void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, float lr,
              MomentumState& state) {
  if (params.size() != grads.size()) {
    throw ContractError("sgd_step: " + std::to_string(params.size()) + " params but " +
                        std::to_string(grads.size()) + " grads");
  }
  if (state.velocity.size() < params.size()) state.velocity.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (p.shape() != g.shape()) {
      throw ContractError("sgd_step: param " + shape_str(p.shape()) + " vs grad " +
                          shape_str(g.shape()));
    }
    if (!p.requires_grad()) continue;
    auto pd = p.mutable_data();
    auto gd = g.data();
    auto& v = state.velocity[i];
    if (state.momentum == 0.0f) {
      for (std::size_t j = 0; j < pd.size(); ++j) pd[j] -= lr * gd[j];
      continue;
    }
    if (v.size() != pd.size()) v.assign(pd.size(), 0.0f);
    for (std::size_t j = 0; j < pd.size(); ++j) {
      v[j] = state.momentum * v[j] + gd[j];
      pd[j] -= lr * v[j];
    }
  }
}

namespace {

double cosine_anneal(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

}  // namespace

float onecycle_lr(std::size_t step, std::size_t total_steps, float max_lr) {
  if (total_steps == 0 || step >= total_steps) {
    throw ContractError("onecycle_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + ")");
  }
  const double peak = max_lr;
  const double initial = peak / kOneCycleDivFactor;
  const double final_lr = initial / kOneCycleFinalDivFactor;
  const auto warm = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(kOneCycleWarmupFraction * double(total_steps))));
  if (step <= warm) {
    return static_cast<float>(cosine_anneal(initial, peak, double(step) / double(warm)));
  }
  const std::size_t down = total_steps - 1 - warm;
  return static_cast<float>(cosine_anneal(peak, final_lr, double(step - warm) / double(down)));
}

OneCycleSgd::OneCycleSgd(const SgdConfig& cfg, std::size_t total_steps)
    : max_lr_(cfg.max_lr), total_steps_(total_steps) {
  cfg.validate();
  require(total_steps >= 1, "OneCycleSgd: total_steps must be positive");
  state_.momentum = cfg.momentum;
}

float OneCycleSgd::current_lr() const {
  return onecycle_lr(std::min(step_, total_steps_ - 1), total_steps_, max_lr_);
}

void OneCycleSgd::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  sgd_step(params, grads, current_lr(), state_);
  ++step_;
}

}  // namespace tscil
