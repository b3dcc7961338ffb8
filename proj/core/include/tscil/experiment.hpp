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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tscil/data.hpp"
#include "tscil/metrics.hpp"
#include "tscil/model.hpp"
#include "tscil/protocol.hpp"

namespace tscil {

/// Bad command line or config content; the message lists valid values.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  enum class Kind { kSynthetic, kDirectory };
  Kind kind = Kind::kSynthetic;
  std::filesystem::path path;
  std::size_t classes = 8;
  std::size_t channels = 3;
  std::size_t length = 64;
  std::size_t n_per_class = 100;
  float noise = 0.1f;
  float drift_profile = 0.0f;
  std::optional<float> pca_ratio;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;  // architecture; scales are taken from `train`
  StrategyConfig train;
  std::vector<Method> methods{Method::kFull};
  std::vector<std::uint64_t> seeds{0};
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Generates or loads the dataset, splits it with `seed` and applies the
/// per-task PCA if configured. Also returns the model config with the
/// channel count and patch length resolved.
struct PreparedStream {
  TaskStream stream;
  ModelConfig model;
};
PreparedStream prepare_stream(const ExperimentConfig& cfg, std::uint64_t seed);

struct MethodResult {
  Method method = Method::kFull;
  std::vector<RunReport> runs;  // one per seed
  AccuracyMatrix mean_accuracy;
  MetricSummary metrics;  // evaluated on mean_accuracy
  std::vector<std::optional<double>> mean_drift;
};

struct ExperimentResult {
  std::vector<std::uint64_t> seeds;
  std::vector<MethodResult> methods;
  double wall_clock_seconds = 0.0;

  const MethodResult& at(Method m) const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunLog* log = nullptr);

/// Element-wise mean of equally sized accuracy matrices.
AccuracyMatrix mean_matrix(const std::vector<AccuracyMatrix>& ms);

/// Writes accuracy_matrix.csv, metrics.json, curves.csv and drift.csv
/// (plus accuracy_matrix_<METHOD>.csv when several methods ran).
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                   const ExperimentResult& result);

nlohmann::json metrics_json(const MetricSummary& m);

}  // namespace tscil
