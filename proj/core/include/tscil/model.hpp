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
#include <memory>
#include <span>
#include <vector>

#include "tscil/data.hpp"
#include "tscil/tensor.hpp"

namespace tscil {

struct ModelConfig {
  std::size_t channels = 3;
  std::size_t embed_dim = 32;
  std::size_t n_blocks = 2;
  std::size_t hidden = 0;      // 0 -> 2 * embed_dim
  std::size_t bottleneck = 0;  // 0 -> embed_dim / 4
  std::size_t patch_len = 8;
  float adapter_scale = 1.0f;
  float adapter_init_std = 0.02f;
  float logit_scale = 10.0f;
  float margin = 0.1f;
  std::uint64_t seed = 0;

  std::size_t hidden_dim() const { return hidden ? hidden : 2 * embed_dim; }
  std::size_t bottleneck_dim() const { return bottleneck ? bottleneck : embed_dim / 4; }
  void validate() const;
};

/// patch_len heuristic for a series of length L: L/8 rounded, at least 1.
std::size_t default_patch_len(std::size_t length);

/// Anything that maps a batch of samples to a [B x D] feature matrix.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::size_t feature_dim() const = 0;
  virtual Tensor features(std::span<const TimeSeriesSample> batch) const = 0;
};

/// Single-sample convenience: returns a [D] vector.
Tensor extract_features(const FeatureExtractor& model, const TimeSeriesSample& x);

/// Features of many samples, computed in chunks without gradient tracking.
Tensor extract_all(const FeatureExtractor& model, std::span<const TimeSeriesSample> samples);

struct MlpBlock {
  Tensor w1;  // [D x H]
  Tensor b1;  // [H]
  Tensor w2;  // [H x D]
  Tensor b2;  // [D]
};

/// Patch embedding followed by residual MLP blocks. Weights never track
/// gradients and are never written after construction.
class FrozenBackbone {
 public:
  explicit FrozenBackbone(const ModelConfig& cfg);
  FrozenBackbone(std::size_t channels, std::size_t patch_len, Tensor patch_embed,
                 std::vector<MlpBlock> blocks);

  std::size_t channels() const { return channels_; }
  std::size_t patch_len() const { return patch_len_; }
  std::size_t embed_dim() const { return patch_embed_.cols(); }
  std::size_t n_blocks() const { return blocks_.size(); }
  std::size_t num_patches(std::size_t length) const { return length / patch_len_; }

  /// Tokens [B*P x D] for a batch whose samples share channels and length.
  Tensor embed(std::span<const TimeSeriesSample> batch) const;
  Tensor block(std::size_t i, const Tensor& h) const;

  const Tensor& patch_embed() const { return patch_embed_; }
  const std::vector<MlpBlock>& blocks() const { return blocks_; }
  /// All weights in declaration order.
  std::vector<Tensor> weights() const;

 private:
  std::size_t channels_;
  std::size_t patch_len_;
  Tensor patch_embed_;  // [C*patch_len x D]
  std::vector<MlpBlock> blocks_;
};

/// Residual bottleneck: x + relu(s * x W_down) W_up.
struct Adapter {
  Tensor down;  // [D x r]
  Tensor up;    // [r x D]
  float scale = 1.0f;

  static Adapter init(std::size_t dim, std::size_t bottleneck, float scale, float init_std,
                      std::uint64_t seed);
  Tensor forward(const Tensor& x) const;
  Adapter frozen_copy() const;
};

Tensor adapter_forward(const Tensor& x, const Adapter& a);

struct CosineHead {
  int task = 0;
  std::vector<ClassId> classes;  // ascending
  Tensor weights;                // [|classes| x D]
};

class HeadBank {
 public:
  HeadBank() = default;
  HeadBank(float logit_scale, float margin) : logit_scale_(logit_scale), margin_(margin) {}

  float logit_scale() const { return logit_scale_; }
  float margin() const { return margin_; }
  bool empty() const { return heads_.empty(); }
  std::size_t size() const { return heads_.size(); }
  const std::vector<CosineHead>& heads() const { return heads_; }
  std::vector<CosineHead>& heads() { return heads_; }

  /// Appends a head for a new task; rows start as N(0, 1/D) draws.
  CosineHead& add_head(int task, std::vector<ClassId> classes, std::size_t dim,
                       std::uint64_t seed);
  const CosineHead& head_for_task(int task) const;
  CosineHead& head_for_task(int task);

  /// All seen classes in ascending order.
  std::vector<ClassId> seen_classes() const;
  /// Class ids in concatenation (head) order.
  std::vector<ClassId> bank_order() const;
  /// Row index of every class in ascending-id order within the concatenated weights.
  std::vector<std::size_t> ascending_columns() const;
  /// Position of a class in seen_classes(); throws if unseen.
  std::size_t seen_index(ClassId c) const;

  /// Concatenated head weights [K_seen x D] in bank order.
  Tensor stacked_weights() const;
  /// Head weights as a list (for optimizers).
  std::vector<Tensor> parameters() const;
  void set_trainable(bool on);
  void set_trainable_only(int task);
  HeadBank frozen_copy() const;

 private:
  float logit_scale_ = 10.0f;
  float margin_ = 0.1f;
  std::vector<CosineHead> heads_;
};

/// Frozen backbone with one shared adapter after every block, plus heads.
class ModelState : public FeatureExtractor {
 public:
  ModelState() = default;
  explicit ModelState(const ModelConfig& cfg);
  ModelState(std::shared_ptr<const FrozenBackbone> backbone, std::vector<Adapter> adapters,
             HeadBank heads);

  std::size_t feature_dim() const override { return backbone_->embed_dim(); }
  Tensor features(std::span<const TimeSeriesSample> batch) const override;

  const FrozenBackbone& backbone() const { return *backbone_; }
  std::shared_ptr<const FrozenBackbone> backbone_ptr() const { return backbone_; }
  const std::vector<Adapter>& adapters() const { return adapters_; }
  std::vector<Adapter>& adapters() { return adapters_; }
  const HeadBank& heads() const { return heads_; }
  HeadBank& heads() { return heads_; }

  std::vector<Tensor> adapter_parameters() const;
  void set_adapters_trainable(bool on);

  /// Deep copy with every parameter frozen; shares only the immutable backbone.
  ModelState snapshot() const;

 private:
  std::shared_ptr<const FrozenBackbone> backbone_;
  std::vector<Adapter> adapters_;
  HeadBank heads_;
};

/// Cosine similarity of every feature row with every seen class, columns in
/// ascending class-id order. Accepts [D] or [B x D].
Tensor cosine_logits(const Tensor& features, const HeadBank& bank);

/// Margin cosine softmax loss restricted to the head of `task`. Earlier
/// heads are not part of the graph and receive zero gradient.
Tensor loss_cos(const Tensor& batch_features, std::span<const ClassId> labels,
                const HeadBank& bank, float logit_scale, float margin, int task);

/// Margin cosine softmax over every seen class (plain fine-tuning).
Tensor loss_cos_all(const Tensor& batch_features, std::span<const ClassId> labels,
                    const HeadBank& bank, float logit_scale, float margin);

/// Mean squared Euclidean distance between old and new features.
Tensor loss_kd(const FeatureExtractor& old_model, const FeatureExtractor& new_model,
               std::span<const TimeSeriesSample> batch);
Tensor loss_kd(const Tensor& old_features, const Tensor& new_features);

/// Cross-entropy of linear logits features * W^T over all seen classes.
/// Labels are positions in bank.seen_classes().
Tensor loss_ce_unified(const Tensor& features, std::span<const std::size_t> labels,
                       const HeadBank& bank);

/// Argmax of cosine logits; ties resolve to the lowest class id.
ClassId predict(const ModelState& model, const TimeSeriesSample& x);
std::vector<ClassId> predict_batch(const ModelState& model,
                                   std::span<const TimeSeriesSample> samples);
std::vector<ClassId> predict_from_features(const Tensor& features, const HeadBank& bank);

}  // namespace tscil
