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
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "tscil/tensor.hpp"

namespace tscil {

using ClassId = int;

struct TimeSeriesSample {
  Tensor values;  // [channels x length]
  ClassId label = 0;

  std::size_t channels() const { return values.dim(0); }
  std::size_t length() const { return values.dim(1); }
};

struct DatasetMeta {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t classes = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<TimeSeriesSample> train;
  std::vector<TimeSeriesSample> test;
};

/// Reads `meta.json`, `train.csv` and `test.csv` from a dataset directory.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

struct SyntheticConfig {
  std::size_t classes = 8;
  std::size_t channels = 3;
  std::size_t length = 64;
  std::size_t n_per_class = 100;
  float noise_sigma = 0.1f;
  /// Fraction of every class template that is a pattern shared by all
  /// classes. Higher values make classes harder to tell apart with the
  /// frozen backbone alone, so adapters move further and old-class
  /// features drift more.
  float drift_profile = 0.0f;
};

/// Sum-of-sinusoid class templates plus i.i.d. Gaussian noise.
std::vector<TimeSeriesSample> make_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

struct Task {
  int id = 0;  // 1-based
  std::vector<ClassId> classes;
  std::vector<TimeSeriesSample> train;
  std::vector<TimeSeriesSample> val;
  std::vector<TimeSeriesSample> test;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<ClassId> class_order;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return class_order.size(); }
};

inline constexpr std::size_t kClassesPerTask = 2;

/// Shuffles the class order and assigns consecutive pairs to tasks; each
/// class's samples are split 70/10/20 into train/val/test.
TaskStream split_tasks(std::span<const TimeSeriesSample> samples, std::size_t num_classes,
                       std::uint64_t seed);

/// Builds a stream from a dataset with an explicit test split: the test
/// rows go to the task test sets, train rows are split 7:1 into train/val.
TaskStream split_tasks(const Dataset& ds, std::uint64_t seed);

void validate_stream(const TaskStream& stream);

/// Channel projection fitted on one task's training samples.
struct ChannelProjection {
  std::vector<float> channel_mean;  // [C]
  Tensor components;                // [k x C], rows are principal axes
  std::vector<double> explained_variance;

  std::size_t in_channels() const { return channel_mean.size(); }
  std::size_t out_channels() const { return components.rows(); }
  TimeSeriesSample apply(const TimeSeriesSample& s) const;
};

ChannelProjection fit_channel_pca(std::span<const TimeSeriesSample> train, float ratio);

struct PcaResult {
  std::vector<TimeSeriesSample> train;
  std::vector<TimeSeriesSample> eval;
  ChannelProjection projection;
};

/// Fits PCA over channels (observations = samples x time steps) on
/// `task_train` only and projects both sets onto the top ceil(ratio*C)
/// components.
PcaResult pca_reduce(std::span<const TimeSeriesSample> task_train,
                     std::span<const TimeSeriesSample> task_eval, float ratio);

/// Applies pca_reduce per task in place; val and test use the task's own fit.
void pca_reduce_stream(TaskStream& stream, float ratio);

}  // namespace tscil
