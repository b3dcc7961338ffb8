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
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tscil/data.hpp"
#include "tscil/dcn.hpp"
#include "tscil/metrics.hpp"
#include "tscil/model.hpp"
#include "tscil/optim.hpp"
#include "tscil/prototypes.hpp"

namespace tscil {

enum class Method {
  kFull,
  kFinetune,
  kBase,
  kBaseUct,
  kSdc,
  kDcnS1Only,
  kDcnS2Only,
  kDcnS1LossS2,
  kDefaultNoUpdate,
};

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
std::vector<Method> all_methods();
/// Comma-separated list of valid names, for diagnostics.
std::string method_names();

enum class PrototypeUpdate { kNone, kDcn, kSdc };

/// Which stages and loss terms a method runs.
struct MethodTraits {
  bool local_heads = true;      // gradient-blocked per-task heads, else plain fine-tuning
  bool kd = true;               // alpha * L_kd in stage 1
  bool dc_in_stage1 = false;    // beta * L_dc in stage 1 (DCN trained jointly)
  bool stage2 = false;          // dedicated DCN refinement
  bool reinit_before_stage2 = false;
  PrototypeUpdate update = PrototypeUpdate::kNone;
  bool uct = false;             // unified classifier retraining
};

MethodTraits method_traits(Method m);

struct StrategyConfig {
  Method method = Method::kFull;
  float alpha = 0.1f;
  float beta = 1.0f;
  float adapter_scale = 1.0f;
  float logit_scale = 10.0f;
  float margin = 0.1f;
  std::size_t samples_per_class = 256;
  std::size_t epochs_s1 = 30;
  std::size_t epochs_s2 = 20;
  std::size_t epochs_s3 = 20;
  float max_lr = 0.005f;
  std::size_t batch_size = 16;
  float momentum = 0.9f;
  bool reinit_heads_for_uct = false;
  double sdc_kernel_sigma = 0.0;  // <= 0: median heuristic

  void validate() const;
  SgdConfig sgd(std::size_t epochs) const;
};

/// Sink for line-oriented JSON run events.
class RunLog {
 public:
  virtual ~RunLog() = default;
  virtual void event(const nlohmann::json& e) = 0;
};

class JsonlRunLog : public RunLog {
 public:
  explicit JsonlRunLog(std::ostream& os) : os_(os) {}
  void event(const nlohmann::json& e) override;

 private:
  std::ostream& os_;
};

struct StageTiming {
  int task = 0;
  double stage1_s = 0.0;
  double stage2_s = 0.0;
  double stage3_s = 0.0;
};

struct RunState {
  ModelState model;
  std::optional<ModelState> old_model;
  PrototypeStore store;
  DriftCompensator dcn;
  AccuracyMatrix accuracy;
  std::uint64_t seed = 0;
  std::vector<std::optional<double>> drift_log;  // D^t per task, absent for t = 1
  std::size_t dcn_trainings = 0;
  std::size_t freeze_checks = 0;
  std::vector<StageTiming> timings;
  std::vector<Tensor> backbone_fingerprint;
};

/// Throws InvariantError unless `now` is bit-identical to `before`;
/// otherwise increments state.freeze_checks.
void check_frozen(std::span<const Tensor> before, std::span<const Tensor> now,
                  const std::string& what, RunState& state);

RunState make_run_state(const ModelConfig& model_cfg, const StrategyConfig& cfg,
                        std::uint64_t seed);

/// One task of the three-stage procedure. `history` holds earlier tasks;
/// their data is read only to measure D^t, never for training.
void run_task(RunState& state, const Task& task, std::span<const Task> history,
              const StrategyConfig& cfg, RunLog* log = nullptr);

/// Accuracy of the current model on each test set of tasks[0..t).
std::vector<double> evaluate_tasks(const ModelState& model, std::span<const Task> tasks);

struct RunReport {
  StrategyConfig config;
  std::uint64_t seed = 0;
  AccuracyMatrix accuracy;
  MetricSummary metrics;
  std::vector<std::optional<double>> drift;
  std::size_t dcn_trainings = 0;
  std::size_t freeze_checks = 0;
  std::vector<StageTiming> timings;
};

RunReport run_stream(const TaskStream& stream, const ModelConfig& model_cfg,
                     const StrategyConfig& cfg, std::uint64_t seed, RunLog* log = nullptr);

/// Samples S_n features per stored class and retrains every head with
/// L_ce, starting from the current weights.
HeadBank retrain_unified(const HeadBank& bank, const PrototypeStore& store,
                         std::size_t samples_per_class, const StrategyConfig& cfg,
                         std::uint64_t seed, RunLog* log = nullptr);

struct SweepPoint {
  float adapter_scale = 0.0f;
  float alpha = 0.0f;
  RunReport report;
};

/// One run_stream per (s, alpha) grid point.
std::vector<SweepPoint> sweep(std::span<const float> scales, std::span<const float> alphas,
                              const TaskStream& stream, const ModelConfig& model_cfg,
                              const StrategyConfig& base, std::uint64_t seed,
                              RunLog* log = nullptr);

}  // namespace tscil
