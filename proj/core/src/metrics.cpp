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

#include "tscil/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "tscil/error.hpp"

namespace tscil {

AccuracyMatrix::AccuracyMatrix(std::vector<std::vector<double>> rows) {
  for (auto& r : rows) append_row(std::move(r));
}

void AccuracyMatrix::append_row(std::vector<double> row) {
  const std::size_t i = rows_.size() + 1;
  if (row.size() != i) {
    throw ContractError("accuracy matrix row " + std::to_string(i) + " must have " +
                        std::to_string(i) + " entries, got " + std::to_string(row.size()));
  }
  for (double a : row) {
    if (!(a >= 0.0 && a <= 1.0)) {
      throw ContractError("accuracy entry " + std::to_string(a) + " outside [0, 1]");
    }
  }
  rows_.push_back(std::move(row));
}

const std::vector<double>& AccuracyMatrix::row(std::size_t i) const {
  if (i < 1 || i > rows_.size()) {
    throw ContractError("accuracy row " + std::to_string(i) + " outside [1, " +
                        std::to_string(rows_.size()) + "]");
  }
  return rows_[i - 1];
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
  const auto& r = row(i);
  if (j < 1 || j > i) {
    throw ContractError("a(" + std::to_string(i) + "," + std::to_string(j) + ") is undefined");
  }
  return r[j - 1];
}

std::string AccuracyMatrix::to_csv() const {
  std::string out;
  char buf[64];
  for (const auto& r : rows_) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) out += ',';
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r[j]);
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

AccuracyMatrix AccuracyMatrix::from_csv(const std::string& text) {
  AccuracyMatrix m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) {
      const auto first = field.find_first_not_of(' ');
      const auto last = field.find_last_not_of(' ');
      if (first == std::string::npos) throw FormatError("matrix line " + std::to_string(lineno) + ": empty field");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data() + first, field.data() + last + 1, v);
      if (ec != std::errc() || ptr != field.data() + last + 1) {
        throw FormatError("matrix line " + std::to_string(lineno) + ": bad number '" + field + "'");
      }
      row.push_back(v);
    }
    try {
      m.append_row(std::move(row));
    } catch (const ContractError& e) {
      throw FormatError("matrix line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (m.tasks() == 0) throw FormatError("accuracy matrix is empty");
  return m;
}

AccuracyMatrix AccuracyMatrix::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

double avg_accuracy(const AccuracyMatrix& m, std::size_t i) {
  const auto& r = m.row(i);
  double s = 0.0;
  for (double a : r) s += a;
  return s / static_cast<double>(i);
}

std::optional<double> avg_forgetting(const AccuracyMatrix& m, std::size_t i) {
  if (i < 2) return std::nullopt;
  m.row(i);
  double total = 0.0;
  for (std::size_t j = 1; j < i; ++j) {
    double best = m.at(j, j);
    for (std::size_t k = j + 1; k <= i - 1; ++k) best = std::max(best, m.at(k, j));
    total += best - m.at(i, j);
  }
  return total / static_cast<double>(i - 1);
}

double avg_learning_accuracy(const AccuracyMatrix& m) {
  if (m.tasks() == 0) throw ContractError("avg_learning_accuracy: empty matrix");
  double s = 0.0;
  for (std::size_t i = 1; i <= m.tasks(); ++i) s += m.at(i, i);
  return s / static_cast<double>(m.tasks());
}

MetricSummary summarize(const AccuracyMatrix& m) {
  MetricSummary s;
  const std::size_t t = m.tasks();
  if (t == 0) throw ContractError("summarize: empty matrix");
  for (std::size_t i = 1; i <= t; ++i) s.accuracy_curve.push_back(avg_accuracy(m, i));
  s.final_accuracy = s.accuracy_curve.back();
  s.final_forgetting = avg_forgetting(m, t);
  s.learning_accuracy = avg_learning_accuracy(m);
  return s;
}

}  // namespace tscil
