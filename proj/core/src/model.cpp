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

#include "tscil/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "tscil/error.hpp"
#include "tscil/random.hpp"

namespace tscil {

namespace {

Tensor randn(Shape shape, float stddev, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor as_rows(const Tensor& features) {
  if (features.ndim() == 1) return features.reshape({1, features.numel()});
  if (features.ndim() != 2) {
    throw DimensionError("features must be [D] or [B x D], got " + shape_str(features.shape()));
  }
  return features;
}

Tensor frozen(const Tensor& t) { return t.detach(); }

}  // namespace

void ModelConfig::validate() const {
  require(channels >= 1, "ModelConfig: channels must be positive");
  require(embed_dim >= 2, "ModelConfig: embed_dim must be at least 2");
  require(n_blocks >= 1, "ModelConfig: n_blocks must be positive");
  require(patch_len >= 1, "ModelConfig: patch_len must be positive");
  require(bottleneck_dim() >= 1 && bottleneck_dim() < embed_dim,
          "ModelConfig: adapter bottleneck must satisfy 1 <= r < D");
  require(logit_scale > 0.0f, "ModelConfig: logit scale must be positive");
}

std::size_t default_patch_len(std::size_t length) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(double(length) / 8.0)));
}

Tensor extract_features(const FeatureExtractor& model, const TimeSeriesSample& x) {
  const TimeSeriesSample batch[1] = {x};
  const Tensor f = model.features(batch);
  return f.reshape({f.numel()});
}

Tensor extract_all(const FeatureExtractor& model, std::span<const TimeSeriesSample> samples) {
  require(!samples.empty(), "extract_all: no samples");
  constexpr std::size_t kChunk = 256;
  const std::size_t d = model.feature_dim();
  std::vector<float> out;
  out.reserve(samples.size() * d);
  for (std::size_t i = 0; i < samples.size(); i += kChunk) {
    const auto part = samples.subspan(i, std::min(kChunk, samples.size() - i));
    const Tensor f = model.features(part);
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return Tensor::from({samples.size(), d}, std::move(out));
}

// ---------------------------------------------------------------------------
// FrozenBackbone

FrozenBackbone::FrozenBackbone(const ModelConfig& cfg)
    : channels_(cfg.channels), patch_len_(cfg.patch_len) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, 0xB0B);
  const std::size_t d = cfg.embed_dim, h = cfg.hidden_dim(), in = channels_ * patch_len_;
  patch_embed_ = randn({in, d}, 1.0f / std::sqrt(float(in)), rng);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    MlpBlock b;
    b.w1 = randn({d, h}, 1.0f / std::sqrt(float(d)), rng);
    b.b1 = randn({h}, 0.1f, rng);
    b.w2 = randn({h, d}, 1.0f / std::sqrt(float(h)), rng);
    b.b2 = randn({d}, 0.1f, rng);
    blocks_.push_back(std::move(b));
  }
}

FrozenBackbone::FrozenBackbone(std::size_t channels, std::size_t patch_len, Tensor patch_embed,
                               std::vector<MlpBlock> blocks)
    : channels_(channels),
      patch_len_(patch_len),
      patch_embed_(frozen(patch_embed)),
      blocks_(std::move(blocks)) {
  if (patch_embed_.ndim() != 2 || patch_embed_.rows() != channels * patch_len) {
    throw DimensionError("patch embedding " + shape_str(patch_embed_.shape()) +
                         " does not match channels*patch_len");
  }
  for (auto& b : blocks_) {
    b = {frozen(b.w1), frozen(b.b1), frozen(b.w2), frozen(b.b2)};
  }
}

Tensor FrozenBackbone::embed(std::span<const TimeSeriesSample> batch) const {
  require(!batch.empty(), "embed: empty batch");
  const std::size_t len = batch.front().length();
  if (len < patch_len_) {
    throw ContractError("series length " + std::to_string(len) + " is shorter than patch_len " +
                        std::to_string(patch_len_));
  }
  const std::size_t n_patch = num_patches(len);
  const std::size_t slab = channels_ * patch_len_;
  std::vector<float> rows(batch.size() * n_patch * slab);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    if (s.channels() != channels_ || s.length() != len) {
      throw DimensionError("batch sample " + std::to_string(b) + " has shape " +
                           shape_str(s.values.shape()) + ", expected [" +
                           std::to_string(channels_) + "x" + std::to_string(len) + "]");
    }
    auto x = s.values.data();
    for (std::size_t p = 0; p < n_patch; ++p) {
      float* dst = rows.data() + (b * n_patch + p) * slab;
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t i = 0; i < patch_len_; ++i)
          dst[c * patch_len_ + i] = x[c * len + p * patch_len_ + i];
    }
  }
  return matmul(Tensor::from({batch.size() * n_patch, slab}, std::move(rows)), patch_embed_);
}

Tensor FrozenBackbone::block(std::size_t i, const Tensor& h) const {
  const auto& b = blocks_.at(i);
  const Tensor inner = gelu(add_row_vector(matmul(h, b.w1), b.b1));
  return add(h, add_row_vector(matmul(inner, b.w2), b.b2));
}

std::vector<Tensor> FrozenBackbone::weights() const {
  std::vector<Tensor> w{patch_embed_};
  for (const auto& b : blocks_) {
    w.push_back(b.w1);
    w.push_back(b.b1);
    w.push_back(b.w2);
    w.push_back(b.b2);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Adapter

Adapter Adapter::init(std::size_t dim, std::size_t bottleneck, float scale, float init_std,
                      std::uint64_t seed) {
  auto rng = make_rng(seed, 0xADA);
  Adapter a;
  a.down = randn({dim, bottleneck}, init_std, rng);
  a.down.set_requires_grad(true);
  a.up = Tensor::zeros({bottleneck, dim}, true);
  a.scale = scale;
  return a;
}

Tensor adapter_forward(const Tensor& x, const Adapter& a) {
  if (x.ndim() != 2 || x.cols() != a.down.rows()) {
    throw DimensionError("adapter: input " + shape_str(x.shape()) + " vs W_down " +
                         shape_str(a.down.shape()));
  }
  const Tensor hidden = relu(scale(matmul(x, a.down), a.scale));
  return add(x, matmul(hidden, a.up));
}

Tensor Adapter::forward(const Tensor& x) const { return adapter_forward(x, *this); }

Adapter Adapter::frozen_copy() const { return {down.detach(), up.detach(), scale}; }

// ---------------------------------------------------------------------------
// HeadBank

CosineHead& HeadBank::add_head(int task, std::vector<ClassId> classes, std::size_t dim,
                               std::uint64_t seed) {
  require(!classes.empty(), "add_head: empty class set");
  std::sort(classes.begin(), classes.end());
  const auto seen = seen_classes();
  for (ClassId c : classes) {
    if (std::binary_search(seen.begin(), seen.end(), c)) {
      throw ContractError("add_head: class " + std::to_string(c) + " already has a head");
    }
  }
  for (const auto& h : heads_) {
    if (h.task == task) throw ContractError("add_head: task " + std::to_string(task) + " exists");
  }
  auto rng = make_rng(seed, 0x4EAD + static_cast<std::uint64_t>(task));
  CosineHead head;
  head.task = task;
  head.weights = randn({classes.size(), dim}, 1.0f / std::sqrt(float(dim)), rng);
  head.weights.set_requires_grad(true);
  head.classes = std::move(classes);
  heads_.push_back(std::move(head));
  return heads_.back();
}

const CosineHead& HeadBank::head_for_task(int task) const {
  for (const auto& h : heads_)
    if (h.task == task) return h;
  throw ContractError("no head for task " + std::to_string(task));
}

CosineHead& HeadBank::head_for_task(int task) {
  return const_cast<CosineHead&>(std::as_const(*this).head_for_task(task));
}

std::vector<ClassId> HeadBank::bank_order() const {
  std::vector<ClassId> out;
  for (const auto& h : heads_) out.insert(out.end(), h.classes.begin(), h.classes.end());
  return out;
}

std::vector<ClassId> HeadBank::seen_classes() const {
  auto out = bank_order();
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> HeadBank::ascending_columns() const {
  const auto order = bank_order();
  std::vector<std::size_t> idx(order.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return order[a] < order[b]; });
  return idx;
}

std::size_t HeadBank::seen_index(ClassId c) const {
  const auto seen = seen_classes();
  auto it = std::lower_bound(seen.begin(), seen.end(), c);
  if (it == seen.end() || *it != c) throw ContractError("class " + std::to_string(c) + " unseen");
  return static_cast<std::size_t>(it - seen.begin());
}

Tensor HeadBank::stacked_weights() const {
  require(!heads_.empty(), "head bank is empty");
  const auto params = parameters();
  return concat_rows(params);
}

std::vector<Tensor> HeadBank::parameters() const {
  std::vector<Tensor> out;
  for (const auto& h : heads_) out.push_back(h.weights);
  return out;
}

void HeadBank::set_trainable(bool on) {
  for (auto& h : heads_) h.weights.set_requires_grad(on);
}

void HeadBank::set_trainable_only(int task) {
  for (auto& h : heads_) h.weights.set_requires_grad(h.task == task);
}

HeadBank HeadBank::frozen_copy() const {
  HeadBank copy(logit_scale_, margin_);
  for (const auto& h : heads_) copy.heads_.push_back({h.task, h.classes, h.weights.detach()});
  return copy;
}

// ---------------------------------------------------------------------------
// ModelState

ModelState::ModelState(const ModelConfig& cfg)
    : backbone_(std::make_shared<const FrozenBackbone>(cfg)),
      heads_(cfg.logit_scale, cfg.margin) {
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    adapters_.push_back(Adapter::init(cfg.embed_dim, cfg.bottleneck_dim(), cfg.adapter_scale,
                                      cfg.adapter_init_std, derive_seed(cfg.seed, 100 + i)));
  }
}

ModelState::ModelState(std::shared_ptr<const FrozenBackbone> backbone,
                       std::vector<Adapter> adapters, HeadBank heads)
    : backbone_(std::move(backbone)), adapters_(std::move(adapters)), heads_(std::move(heads)) {
  require(backbone_ != nullptr, "ModelState: null backbone");
  require(adapters_.size() == backbone_->n_blocks(), "ModelState: one adapter per block required");
}

Tensor ModelState::features(std::span<const TimeSeriesSample> batch) const {
  Tensor h = backbone_->embed(batch);
  for (std::size_t i = 0; i < backbone_->n_blocks(); ++i) {
    h = backbone_->block(i, h);
    h = adapters_[i].forward(h);
  }
  return group_mean(h, backbone_->num_patches(batch.front().length()));
}

std::vector<Tensor> ModelState::adapter_parameters() const {
  std::vector<Tensor> out;
  for (const auto& a : adapters_) {
    out.push_back(a.down);
    out.push_back(a.up);
  }
  return out;
}

void ModelState::set_adapters_trainable(bool on) {
  for (auto& a : adapters_) {
    a.down.set_requires_grad(on);
    a.up.set_requires_grad(on);
  }
}

ModelState ModelState::snapshot() const {
  std::vector<Adapter> adapters;
  for (const auto& a : adapters_) adapters.push_back(a.frozen_copy());
  return ModelState(backbone_, std::move(adapters), heads_.frozen_copy());
}

// ---------------------------------------------------------------------------
// Heads and losses

Tensor cosine_logits(const Tensor& features, const HeadBank& bank) {
  require(!bank.empty(), "cosine_logits: empty head bank");
  const bool vector_in = features.ndim() == 1;
  const Tensor f = as_rows(features);
  const Tensor w = bank.stacked_weights();
  if (f.cols() != w.cols()) {
    throw DimensionError("cosine_logits: features " + shape_str(f.shape()) + " vs heads " +
                         shape_str(w.shape()));
  }
  const Tensor cos = matmul(normalize_rows(f), transpose(normalize_rows(w)));
  const auto cols = bank.ascending_columns();
  const Tensor out = select_cols(cos, cols);
  return vector_in ? out.reshape({out.numel()}) : out;
}

namespace {

Tensor margin_softmax(const Tensor& features, const Tensor& weights,
                      std::span<const std::size_t> targets, float logit_scale, float margin) {
  const Tensor f = as_rows(features);
  if (f.cols() != weights.cols()) {
    throw DimensionError("cosine head: features " + shape_str(f.shape()) + " vs weights " +
                         shape_str(weights.shape()));
  }
  const Tensor cos = matmul(normalize_rows(f), transpose(normalize_rows(weights)));
  std::vector<float> mask(cos.numel(), 0.0f);
  for (std::size_t i = 0; i < targets.size(); ++i) mask[i * cos.cols() + targets[i]] = margin;
  const Tensor logits = scale(sub(cos, Tensor::from(cos.shape(), std::move(mask))), logit_scale);
  return cross_entropy(logits, targets);
}

}  // namespace

Tensor loss_cos(const Tensor& batch_features, std::span<const ClassId> labels,
                const HeadBank& bank, float logit_scale, float margin, int task) {
  const CosineHead& head = bank.head_for_task(task);
  std::vector<std::size_t> targets;
  targets.reserve(labels.size());
  for (ClassId c : labels) {
    auto it = std::lower_bound(head.classes.begin(), head.classes.end(), c);
    if (it == head.classes.end() || *it != c) {
      throw ContractError("loss_cos: label " + std::to_string(c) + " is not a class of task " +
                          std::to_string(task));
    }
    targets.push_back(static_cast<std::size_t>(it - head.classes.begin()));
  }
  return margin_softmax(batch_features, head.weights, targets, logit_scale, margin);
}

Tensor loss_cos_all(const Tensor& batch_features, std::span<const ClassId> labels,
                    const HeadBank& bank, float logit_scale, float margin) {
  const auto order = bank.bank_order();
  std::vector<std::size_t> targets;
  for (ClassId c : labels) {
    auto it = std::find(order.begin(), order.end(), c);
    if (it == order.end()) throw ContractError("loss_cos_all: unseen label " + std::to_string(c));
    targets.push_back(static_cast<std::size_t>(it - order.begin()));
  }
  return margin_softmax(batch_features, bank.stacked_weights(), targets, logit_scale, margin);
}

Tensor loss_kd(const Tensor& old_features, const Tensor& new_features) {
  if (old_features.shape() != new_features.shape()) {
    throw ContractError("loss_kd: feature shapes differ, " + shape_str(old_features.shape()) +
                        " vs " + shape_str(new_features.shape()));
  }
  return mean_squared_distance(as_rows(new_features), as_rows(old_features.detach()));
}

Tensor loss_kd(const FeatureExtractor& old_model, const FeatureExtractor& new_model,
               std::span<const TimeSeriesSample> batch) {
  if (old_model.feature_dim() != new_model.feature_dim()) {
    throw ContractError("loss_kd: feature dimensions differ");
  }
  return loss_kd(old_model.features(batch), new_model.features(batch));
}

Tensor loss_ce_unified(const Tensor& features, std::span<const std::size_t> labels,
                       const HeadBank& bank) {
  const Tensor f = as_rows(features);
  const Tensor w = bank.stacked_weights();
  if (f.cols() != w.cols()) {
    throw DimensionError("loss_ce_unified: features " + shape_str(f.shape()) + " vs heads " +
                         shape_str(w.shape()));
  }
  const std::size_t k = w.rows();
  for (auto l : labels) {
    if (l >= k) {
      throw ContractError("loss_ce_unified: label " + std::to_string(l) + " >= seen-class count " +
                          std::to_string(k));
    }
  }
  const auto cols = bank.ascending_columns();
  const Tensor logits = select_cols(matmul(f, transpose(w)), cols);
  return cross_entropy(logits, labels);
}

std::vector<ClassId> predict_from_features(const Tensor& features, const HeadBank& bank) {
  const Tensor logits = as_rows(cosine_logits(as_rows(features).detach(), bank));
  const auto seen = bank.seen_classes();
  std::vector<ClassId> out(logits.rows());
  const std::size_t k = logits.cols();
  auto d = logits.data();
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (d[i * k + j] > d[i * k + best]) best = j;
    out[i] = seen[best];
  }
  return out;
}

ClassId predict(const ModelState& model, const TimeSeriesSample& x) {
  return predict_from_features(extract_features(model, x), model.heads()).front();
}

std::vector<ClassId> predict_batch(const ModelState& model,
                                   std::span<const TimeSeriesSample> samples) {
  return predict_from_features(extract_all(model, samples), model.heads());
}

}  // namespace tscil
