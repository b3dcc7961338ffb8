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

#include "tscil/prototypes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "tscil/checkpoint.hpp"
#include "tscil/error.hpp"
#include "tscil/random.hpp"

namespace tscil {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecD = Eigen::VectorXd;

MatD to_eigen(const Tensor& t) {
  const std::size_t r = t.ndim() == 1 ? t.numel() : t.rows();
  const std::size_t c = t.ndim() == 1 ? 1 : t.cols();
  MatD m(r, c);
  auto d = t.data();
  for (std::size_t i = 0; i < r * c; ++i) m.data()[i] = d[i];
  return m;
}

Tensor from_eigen(const MatD& m, Shape shape) {
  std::vector<float> v(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.size(); ++i) v[i] = static_cast<float>(m.data()[i]);
  return Tensor::from(std::move(shape), std::move(v));
}

void check_square(const Tensor& cov, const char* what) {
  if (cov.ndim() != 2 || cov.rows() != cov.cols()) {
    throw DimensionError(std::string(what) + ": covariance must be square, got " +
                         shape_str(cov.shape()));
  }
}

}  // namespace

Tensor sample_covariance(const Tensor& features) {
  if (features.ndim() != 2 || features.rows() < 2) {
    throw ContractError("sample covariance needs at least 2 samples");
  }
  const MatD x = to_eigen(features);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const MatD centered = x.rowwise() - mu;
  const MatD cov = (centered.transpose() * centered) / double(x.rows() - 1);
  return from_eigen(cov, {features.cols(), features.cols()});
}

Tensor shrink_covariance(const Tensor& cov) {
  check_square(cov, "shrink_covariance");
  MatD m = to_eigen(cov);
  const double d = double(m.rows());
  const double eps = std::max(kShrinkageFactor * m.trace() / d, kShrinkageFloor);
  m.diagonal().array() += eps;
  return from_eigen(m, cov.shape());
}

std::vector<ClassPrototype> prototypes_from_features(const Tensor& features,
                                                     std::span<const ClassId> labels, int task) {
  if (features.ndim() != 2 || features.rows() != labels.size()) {
    throw DimensionError("prototypes: " + std::to_string(labels.size()) + " labels for features " +
                         shape_str(features.shape()));
  }
  std::vector<ClassId> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const std::size_t dim = features.cols();
  auto fd = features.data();

  std::vector<ClassPrototype> out;
  for (ClassId c : classes) {
    std::vector<float> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) rows.insert(rows.end(), fd.begin() + i * dim, fd.begin() + (i + 1) * dim);
    }
    const std::size_t n = rows.size() / dim;
    if (n < 2) {
      throw ContractError("class " + std::to_string(c) + " has " + std::to_string(n) +
                          " sample(s); covariance needs at least 2");
    }
    const Tensor cls = Tensor::from({n, dim}, std::move(rows));
    const MatD x = to_eigen(cls);
    const Eigen::RowVectorXd mu = x.colwise().mean();
    ClassPrototype p;
    p.class_id = c;
    p.task_of_origin = task;
    p.mean = from_eigen(mu, {dim});
    p.cov = shrink_covariance(sample_covariance(cls));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<ClassPrototype> compute_prototypes(const FeatureExtractor& model,
                                               std::span<const TimeSeriesSample> task_data,
                                               int task) {
  require(!task_data.empty(), "compute_prototypes: no samples");
  std::vector<ClassId> labels;
  for (const auto& s : task_data) labels.push_back(s.label);
  return prototypes_from_features(extract_all(model, task_data), labels, task);
}

// ---------------------------------------------------------------------------
// PrototypeStore

const ClassPrototype& PrototypeStore::at(ClassId c) const {
  auto it = by_class_.find(c);
  if (it == by_class_.end()) throw ContractError("no prototype for class " + std::to_string(c));
  return it->second;
}

std::vector<ClassId> PrototypeStore::classes() const {
  std::vector<ClassId> out;
  for (const auto& [c, _] : by_class_) out.push_back(c);
  return out;
}

void PrototypeStore::merge(std::span<const ClassPrototype> fresh) {
  for (const auto& p : fresh) {
    if (!by_class_.empty() && by_class_.begin()->second.dim() != p.dim()) {
      throw DimensionError("prototype dimension mismatch on merge");
    }
    if (!by_class_.emplace(p.class_id, p).second) {
      throw ContractError("class " + std::to_string(p.class_id) + " already has a prototype");
    }
  }
}

PrototypeStore PrototypeStore::subset(std::span<const ClassId> classes) const {
  PrototypeStore out;
  for (ClassId c : classes) out.by_class_.emplace(c, at(c));
  return out;
}

PrototypeStore update_with_dcn(const PrototypeStore& store, const DriftCompensator& d) {
  const MatD w = to_eigen(d.weight);
  PrototypeStore out;
  std::vector<ClassPrototype> moved;
  for (const auto& [c, p] : store.items()) {
    if (p.dim() != d.dim()) {
      throw DimensionError("update_with_dcn: prototype dim " + std::to_string(p.dim()) +
                           " vs compensator " + shape_str(d.weight.shape()));
    }
    ClassPrototype q = p;
    q.mean = from_eigen(w * to_eigen(p.mean), {p.dim()});
    MatD cov = w * to_eigen(p.cov) * w.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    q.cov = from_eigen(cov, p.cov.shape());
    moved.push_back(std::move(q));
  }
  out.merge(moved);
  return out;
}

double median_pairwise_distance(const Tensor& features) {
  const MatD x = to_eigen(features);
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) dists.push_back((x.row(i) - x.row(j)).norm());
  if (dists.empty()) return 1.0;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid;
}

PrototypeStore sdc_update(const PrototypeStore& store, const Tensor& old_features,
                          const Tensor& new_features, double kernel_sigma, SdcReport* report) {
  if (old_features.ndim() != 2 || old_features.rows() == 0) {
    throw ContractError("sdc_update: empty new-task data");
  }
  if (old_features.shape() != new_features.shape()) {
    throw DimensionError("sdc_update: old/new feature shapes differ");
  }
  const MatD f_old = to_eigen(old_features);
  const MatD drift = to_eigen(new_features) - f_old;
  const double sigma = kernel_sigma > 0.0 ? kernel_sigma : median_pairwise_distance(old_features);
  const double denom = 2.0 * sigma * sigma;
  if (report) report->kernel_sigma = sigma;

  std::vector<ClassPrototype> moved;
  for (const auto& [c, p] : store.items()) {
    const Eigen::RowVectorXd mu = to_eigen(p.mean).transpose();
    if (mu.size() != f_old.cols()) throw DimensionError("sdc_update: prototype dim mismatch");
    VecD w(f_old.rows());
    for (Eigen::Index i = 0; i < f_old.rows(); ++i) {
      w[i] = std::exp(-(f_old.row(i) - mu).squaredNorm() / denom);
    }
    Eigen::RowVectorXd shift;
    if (w.sum() < 1e-12) {
      shift = drift.colwise().mean();
      if (report) report->fallback_classes.push_back(c);
    } else {
      shift = (w.transpose() * drift) / w.sum();
    }
    ClassPrototype q = p;
    q.mean = from_eigen(mu + shift, {p.dim()});
    moved.push_back(std::move(q));
  }
  PrototypeStore out;
  out.merge(moved);
  return out;
}

PrototypeStore sdc_update(const PrototypeStore& store, const FeatureExtractor& old_model,
                          const FeatureExtractor& new_model,
                          std::span<const TimeSeriesSample> new_task_data, double kernel_sigma,
                          SdcReport* report) {
  if (new_task_data.empty()) throw ContractError("sdc_update: empty new-task data");
  return sdc_update(store, extract_all(old_model, new_task_data),
                    extract_all(new_model, new_task_data), kernel_sigma, report);
}

Tensor covariance_sqrt(const Tensor& cov) {
  check_square(cov, "covariance_sqrt");
  const MatD m = to_eigen(cov);
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-6 * scale) {
    throw ContractError("covariance is not symmetric within 1e-6");
  }
  Eigen::SelfAdjointEigenSolver<MatD> eig(0.5 * (m + m.transpose()));
  const VecD root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const MatD s = eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
  return from_eigen(s, cov.shape());
}

Tensor sample_features(const ClassPrototype& p, std::size_t count, std::uint64_t seed) {
  require(count >= 1, "sample_features: S_n must be at least 1");
  const MatD root = to_eigen(covariance_sqrt(p.cov));
  const VecD mu = to_eigen(p.mean);
  const auto d = static_cast<Eigen::Index>(p.dim());
  auto rng = make_rng(seed, 0x5A3);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatD z(static_cast<Eigen::Index>(count), d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  const MatD v = (z * root.transpose()).rowwise() + mu.transpose();
  return from_eigen(v, {count, p.dim()});
}

double prototype_distance(const PrototypeStore& updated, const PrototypeStore& real) {
  if (updated.classes() != real.classes()) {
    throw ContractError("prototype_distance: class sets differ");
  }
  double total = 0.0;
  for (const auto& [c, p] : updated.items()) {
    auto a = p.mean.data();
    auto b = real.at(c).mean.data();
    if (a.size() != b.size()) throw DimensionError("prototype_distance: dim mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double diff = double(a[i]) - double(b[i]);
      total += diff * diff;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Dump

void write_prototype_dump(const std::filesystem::path& csv_path,
                          const std::filesystem::path& cov_path, const PrototypeStore& store) {
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  char buf[64];
  std::vector<NamedTensor> sections;
  for (const auto& [c, p] : store.items()) {
    csv << c << ',' << p.task_of_origin;
    for (float v : p.mean.data()) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      csv << ',' << std::string_view(buf, ptr - buf);
    }
    csv << '\n';
    sections.push_back({"cov/" + std::to_string(c), p.cov});
  }
  std::ofstream bin(cov_path, std::ios::binary);
  if (!bin) throw IoError("cannot write " + cov_path.string());
  io::write_magic(bin, kCovarianceMagic);
  io::write_sections(bin, sections);
}

PrototypeStore read_prototype_dump(const std::filesystem::path& csv_path,
                                   const std::filesystem::path& cov_path) {
  std::ifstream bin(cov_path, std::ios::binary);
  if (!bin) throw IoError("cannot open " + cov_path.string());
  io::expect_magic(bin, kCovarianceMagic, "covariance dump");
  const auto sections = io::read_sections(bin);

  std::ifstream csv(csv_path);
  if (!csv) throw IoError("cannot open " + csv_path.string());
  std::vector<ClassPrototype> protos;
  std::string line;
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 3) throw FormatError("prototype dump row " + std::to_string(row + 1));
    ClassPrototype p;
    p.class_id = std::stoi(fields[0]);
    p.task_of_origin = std::stoi(fields[1]);
    std::vector<float> mu;
    for (std::size_t i = 2; i < fields.size(); ++i) mu.push_back(std::stof(fields[i]));
    const std::size_t d = mu.size();
    p.mean = Tensor::from({d}, std::move(mu));
    if (row >= sections.size() || sections[row].name != "cov/" + std::to_string(p.class_id)) {
      throw FormatError("covariance dump does not match prototype rows");
    }
    p.cov = sections[row].value;
    if (p.cov.rows() != d || p.cov.cols() != d) throw FormatError("covariance block shape");
    protos.push_back(std::move(p));
    ++row;
  }
  PrototypeStore store;
  store.merge(protos);
  return store;
}

}  // namespace tscil
