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

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tscil/tensor.hpp"

namespace tscil {

struct SgdConfig {
  float max_lr = 0.005f;
  std::size_t batch_size = 16;
  std::size_t epochs_per_stage = 20;
  float momentum = 0.9f;

  void validate() const;
};

/// Velocity buffers, one per parameter slot, created lazily on first step.
struct MomentumState {
  float momentum = 0.0f;
  std::vector<std::vector<float>> velocity;
};

/// In-place SGD with heavy-ball momentum: v <- mu*v + g; p <- p - lr*v.
/// Tensors with requires_grad == false are skipped.
void sgd_step(std::span<Tensor> params, std::span<const Tensor> grads, float lr,
              MomentumState& state);

/// One-cycle learning rate: cosine ramp from max_lr/25 to max_lr over the
/// first 30% of steps, then cosine anneal down to max_lr/(25*1e3).
float onecycle_lr(std::size_t step, std::size_t total_steps, float max_lr);

inline constexpr double kOneCycleWarmupFraction = 0.3;
inline constexpr double kOneCycleDivFactor = 25.0;
inline constexpr double kOneCycleFinalDivFactor = 1e3;

/// Convenience driver pairing the momentum state with the schedule.
class OneCycleSgd {
 public:
  OneCycleSgd(const SgdConfig& cfg, std::size_t total_steps);

  void step(std::span<Tensor> params, std::span<const Tensor> grads);
  float current_lr() const;
  std::size_t steps_taken() const { return step_; }

 private:
  float max_lr_;
  std::size_t total_steps_;
  std::size_t step_ = 0;
  MomentumState state_;
};

}  // namespace tscil
