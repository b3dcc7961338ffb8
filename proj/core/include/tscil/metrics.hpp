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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tscil {

/// Lower-triangular a(i, j): accuracy on task j's test set after training
/// task i, 1 <= j <= i <= T. Indices are 1-based.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::vector<std::vector<double>> rows);

  std::size_t tasks() const { return rows_.size(); }
  double at(std::size_t i, std::size_t j) const;
  const std::vector<double>& row(std::size_t i) const;
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  /// Appends row i = tasks()+1; it must have exactly i entries in [0, 1].
  void append_row(std::vector<double> row);

  /// Row i holds a(i, 1..i), comma separated.
  std::string to_csv() const;
  static AccuracyMatrix from_csv(const std::string& text);
  static AccuracyMatrix read_csv(const std::filesystem::path& path);

 private:
  std::vector<std::vector<double>> rows_;
};

/// A_i = (1/i) sum_{j<=i} a(i, j).
double avg_accuracy(const AccuracyMatrix& m, std::size_t i);
/// F_i = (1/(i-1)) sum_{j<i} [max_{j<=k<=i-1} a(k, j) - a(i, j)]; absent for i < 2.
std::optional<double> avg_forgetting(const AccuracyMatrix& m, std::size_t i);
/// A_cur = (1/T) sum_i a(i, i).
double avg_learning_accuracy(const AccuracyMatrix& m);

struct MetricSummary {
  double final_accuracy = 0.0;                // A_T
  std::optional<double> final_forgetting;     // F_T
  double learning_accuracy = 0.0;             // A_cur
  std::vector<double> accuracy_curve;         // A_1..A_T
};

MetricSummary summarize(const AccuracyMatrix& m);

}  // namespace tscil
