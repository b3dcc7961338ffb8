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
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tscil/data.hpp"
#include "tscil/dcn.hpp"
#include "tscil/model.hpp"
#include "tscil/tensor.hpp"

namespace tscil {

/// Gaussian summary of one class in feature space.
struct ClassPrototype {
  ClassId class_id = 0;
  Tensor mean;  // [D]
  Tensor cov;   // [D x D], symmetric, shrunk
  int task_of_origin = 0;

  std::size_t dim() const { return mean.numel(); }
};

inline constexpr double kShrinkageFactor = 1e-4;
/// Shrinkage used when a class has zero spread (trace of Σ is zero).
inline constexpr double kShrinkageFloor = 1e-8;

/// Unbiased sample covariance (divisor N-1) of the rows of `features`.
Tensor sample_covariance(const Tensor& features);
/// Adds eps*I with eps = 1e-4 * trace / D (floored for degenerate classes).
Tensor shrink_covariance(const Tensor& cov);

std::vector<ClassPrototype> prototypes_from_features(const Tensor& features,
                                                     std::span<const ClassId> labels, int task);
std::vector<ClassPrototype> compute_prototypes(const FeatureExtractor& model,
                                               std::span<const TimeSeriesSample> task_data,
                                               int task);

class PrototypeStore {
 public:
  bool empty() const { return by_class_.empty(); }
  std::size_t size() const { return by_class_.size(); }
  bool contains(ClassId c) const { return by_class_.count(c) != 0; }
  const ClassPrototype& at(ClassId c) const;
  std::vector<ClassId> classes() const;
  const std::map<ClassId, ClassPrototype>& items() const { return by_class_; }

  /// Adds new-class prototypes; a class that is already stored is an error.
  void merge(std::span<const ClassPrototype> fresh);
  /// Returns the sub-store restricted to the given classes.
  PrototypeStore subset(std::span<const ClassId> classes) const;

 private:
  std::map<ClassId, ClassPrototype> by_class_;
};

/// Pushes every prototype through the linear compensator: mu <- W mu,
/// Sigma <- W Sigma W^T.
PrototypeStore update_with_dcn(const PrototypeStore& store, const DriftCompensator& d);

struct SdcReport {
  double kernel_sigma = 0.0;
  std::vector<ClassId> fallback_classes;  // used the unweighted mean drift
};

/// Median of pairwise Euclidean distances between rows.
double median_pairwise_distance(const Tensor& features);

/// Semantic drift compensation on precomputed features of the new task's
/// data. kernel_sigma <= 0 selects the median heuristic.
PrototypeStore sdc_update(const PrototypeStore& store, const Tensor& old_features,
                          const Tensor& new_features, double kernel_sigma,
                          SdcReport* report = nullptr);
PrototypeStore sdc_update(const PrototypeStore& store, const FeatureExtractor& old_model,
                          const FeatureExtractor& new_model,
                          std::span<const TimeSeriesSample> new_task_data, double kernel_sigma,
                          SdcReport* report = nullptr);

/// Symmetric PSD square root via eigen-decomposition; negative eigenvalues
/// are clamped to zero.
Tensor covariance_sqrt(const Tensor& cov);

/// S_n draws mu + Sigma^{1/2} z, z ~ N(0, I), as rows of an [S_n x D] tensor.
Tensor sample_features(const ClassPrototype& p, std::size_t count, std::uint64_t seed);

/// Sum over classes of ||mu_updated - mu_real||^2. Key sets must match.
double prototype_distance(const PrototypeStore& updated, const PrototypeStore& real);

/// `class_id,task_of_origin,mu_0..mu_{D-1}` rows plus a binary covariance file.
void write_prototype_dump(const std::filesystem::path& csv_path,
                          const std::filesystem::path& cov_path, const PrototypeStore& store);
PrototypeStore read_prototype_dump(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& cov_path);

}  // namespace tscil
