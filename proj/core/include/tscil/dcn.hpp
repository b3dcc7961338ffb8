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
#include <cstdint>
#include <span>
#include <vector>

#include "tscil/model.hpp"
#include "tscil/optim.hpp"
#include "tscil/tensor.hpp"

namespace tscil {

/// Bias-free linear map W: D -> D carrying old-model features into the
/// new model's feature space.
struct DriftCompensator {
  Tensor weight;  // [D x D]

  std::size_t dim() const { return weight.rows(); }
  /// W v for a [D] vector, or F W^T for a [B x D] batch of row vectors.
  Tensor apply(const Tensor& v) const;
  void set_trainable(bool on) { weight.set_requires_grad(on); }
  DriftCompensator frozen_copy() const { return {weight.detach()}; }
};

/// Identity-initialized compensator.
DriftCompensator dcn_init(std::size_t dim);

Tensor dcn_apply(const DriftCompensator& d, const Tensor& v);

/// Mean over the batch of ||d(F_old(x)) - F_new(x)||^2. Gradients reach d
/// and whatever produced `new_features`; old features are treated as constants.
Tensor loss_dc(const DriftCompensator& d, const Tensor& old_features, const Tensor& new_features);
Tensor loss_dc(const DriftCompensator& d, const FeatureExtractor& old_model,
               const FeatureExtractor& new_model, std::span<const TimeSeriesSample> batch);

struct DcnTrainLog {
  float loss_before = 0.0f;
  float loss_after = 0.0f;
  std::vector<float> epoch_losses;
};

/// SGD refinement of d on fixed feature pairs (both extractors frozen).
DriftCompensator train_dcn_on_features(DriftCompensator d, const Tensor& old_features,
                                       const Tensor& new_features, const SgdConfig& cfg,
                                       std::uint64_t seed, DcnTrainLog* log = nullptr);

/// Second DCN stage: freezes both models and refines d, starting from
/// whatever state d carries, for cfg.epochs_per_stage epochs.
DriftCompensator train_stage2(DriftCompensator d, const FeatureExtractor& old_model,
                              const FeatureExtractor& new_model,
                              std::span<const TimeSeriesSample> train_data, const SgdConfig& cfg,
                              std::uint64_t seed, DcnTrainLog* log = nullptr);

}  // namespace tscil
