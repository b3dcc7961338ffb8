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

#include "tscil/dcn.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tscil/error.hpp"
#include "tscil/random.hpp"

namespace tscil {

DriftCompensator dcn_init(std::size_t dim) {
  require(dim >= 1, "dcn_init: dimension must be positive");
  return {Tensor::identity(dim, true)};
}

Tensor DriftCompensator::apply(const Tensor& v) const {
  const std::size_t d = dim();
  if (v.ndim() == 1) {
    if (v.numel() != d) {
      throw DimensionError("dcn_apply: vector " + shape_str(v.shape()) + " vs weight " +
                           shape_str(weight.shape()));
    }
    return matmul(weight, v.reshape({d, 1})).reshape({d});
  }
  if (v.ndim() != 2 || v.cols() != d) {
    throw DimensionError("dcn_apply: batch " + shape_str(v.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  return matmul(v, transpose(weight));
}

Tensor dcn_apply(const DriftCompensator& d, const Tensor& v) { return d.apply(v); }

Tensor loss_dc(const DriftCompensator& d, const Tensor& old_features, const Tensor& new_features) {
  if (old_features.shape() != new_features.shape() || old_features.ndim() != 2 ||
      old_features.cols() != d.dim()) {
    throw ContractError("loss_dc: feature shapes " + shape_str(old_features.shape()) + " / " +
                        shape_str(new_features.shape()) + " vs compensator " +
                        shape_str(d.weight.shape()));
  }
  return mean_squared_distance(d.apply(old_features.detach()), new_features);
}

Tensor loss_dc(const DriftCompensator& d, const FeatureExtractor& old_model,
               const FeatureExtractor& new_model, std::span<const TimeSeriesSample> batch) {
  if (old_model.feature_dim() != d.dim() || new_model.feature_dim() != d.dim()) {
    throw ContractError("loss_dc: model feature dimension does not match compensator");
  }
  return loss_dc(d, old_model.features(batch), new_model.features(batch));
}

namespace {

Tensor gather_rows(const Tensor& m, std::span<const std::size_t> idx) {
  const std::size_t d = m.cols();
  std::vector<float> out(idx.size() * d);
  auto src = m.data();
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(src.begin() + idx[i] * d, d, out.begin() + i * d);
  return Tensor::from({idx.size(), d}, std::move(out));
}

}  // namespace

DriftCompensator train_dcn_on_features(DriftCompensator d, const Tensor& old_features,
                                       const Tensor& new_features, const SgdConfig& cfg,
                                       std::uint64_t seed, DcnTrainLog* log) {
  cfg.validate();
  if (old_features.ndim() != 2 || old_features.rows() == 0) {
    throw ContractError("DCN training: empty training data");
  }
  const std::size_t n = old_features.rows();
  d.weight = d.weight.detach();
  d.set_trainable(true);
  if (log) log->loss_before = loss_dc(d, old_features, new_features).item();

  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  OneCycleSgd opt(cfg, std::max<std::size_t>(1, batches * cfg.epochs_per_stage));
  auto rng = make_rng(seed, 0xDC2);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto idx = std::span(order).subspan(b * cfg.batch_size,
                                                std::min(cfg.batch_size, n - b * cfg.batch_size));
      const Tensor loss = loss_dc(d, gather_rows(old_features, idx), gather_rows(new_features, idx));
      std::vector<Tensor> params{d.weight};
      const auto grads = grad(loss, params);
      opt.step(params, grads);
      epoch_loss += loss.item() * double(idx.size());
    }
    if (log) log->epoch_losses.push_back(static_cast<float>(epoch_loss / double(n)));
  }
  if (log) log->loss_after = loss_dc(d, old_features, new_features).item();
  return d;
}

DriftCompensator train_stage2(DriftCompensator d, const FeatureExtractor& old_model,
                              const FeatureExtractor& new_model,
                              std::span<const TimeSeriesSample> train_data, const SgdConfig& cfg,
                              std::uint64_t seed, DcnTrainLog* log) {
  if (train_data.empty()) throw ContractError("train_stage2: empty training data");
  const Tensor old_f = extract_all(old_model, train_data).detach();
  const Tensor new_f = extract_all(new_model, train_data).detach();
  return train_dcn_on_features(std::move(d), old_f, new_f, cfg, seed, log);
}

}  // namespace tscil
