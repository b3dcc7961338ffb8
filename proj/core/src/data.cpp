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

#include "tscil/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tscil/error.hpp"

namespace tscil {

namespace fs = std::filesystem;

namespace {

std::vector<TimeSeriesSample> read_rows(const fs::path& file, const DatasetMeta& meta) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  const std::size_t expected = 1 + meta.channels * meta.length;
  std::vector<TimeSeriesSample> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<float> fields;
    fields.reserve(expected);
    const char* p = line.data();
    const char* end = p + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      while (p < comma && *p == ' ') ++p;
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      while (ptr < comma && *ptr == ' ') ++ptr;
      if (ec != std::errc() || ptr != comma) {
        throw FormatError(file.filename().string() + " row " + std::to_string(row) +
                          ": unparsable field '" + std::string(p, comma) + "'");
      }
      fields.push_back(v);
      p = comma + 1;
    }
    if (fields.size() != expected) {
      throw FormatError(file.filename().string() + " row " + std::to_string(row) + ": expected " +
                        std::to_string(expected) + " fields, found " +
                        std::to_string(fields.size()));
    }
    const float lab = fields.front();
    if (lab < 0.0f || lab != std::floor(lab) || lab >= float(meta.classes)) {
      throw FormatError(file.filename().string() + " row " + std::to_string(row) +
                        ": invalid label " + std::to_string(lab));
    }
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (!std::isfinite(fields[i])) {
        throw FormatError(file.filename().string() + " row " + std::to_string(row) +
                          ": non-finite value");
      }
    }
    TimeSeriesSample s;
    s.label = static_cast<ClassId>(lab);
    s.values = Tensor::from({meta.channels, meta.length},
                            std::vector<float>(fields.begin() + 1, fields.end()));
    out.push_back(std::move(s));
  }
  return out;
}

void write_rows(const fs::path& file, std::span<const TimeSeriesSample> rows) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  char buf[64];
  for (const auto& s : rows) {
    out << s.label;
    for (float v : s.values.data()) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  }
}

std::mt19937_64 keyed_rng(std::uint64_t seed, std::uint64_t key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
  return std::mt19937_64(seq);
}

// Per-channel sum of three sinusoids.
struct Template {
  std::vector<float> values;  // [C x L]
};

Template make_template(std::mt19937_64& rng, std::size_t channels, std::size_t length) {
  std::uniform_real_distribution<double> freq(0.5, 6.0);
  std::uniform_real_distribution<double> amp(0.4, 1.4);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> offset(-0.5, 0.5);
  Template t;
  t.values.assign(channels * length, 0.0f);
  for (std::size_t c = 0; c < channels; ++c) {
    const double off = offset(rng);
    double f[3], a[3], ph[3];
    for (int h = 0; h < 3; ++h) {
      f[h] = freq(rng);
      a[h] = amp(rng) / (h + 1);
      ph[h] = phase(rng);
    }
    for (std::size_t i = 0; i < length; ++i) {
      double v = off;
      const double tau = double(i) / double(length);
      for (int h = 0; h < 3; ++h) v += a[h] * std::sin(2.0 * std::numbers::pi * f[h] * tau + ph[h]);
      t.values[c * length + i] = static_cast<float>(v);
    }
  }
  return t;
}

void check_class_counts(const std::map<ClassId, std::vector<std::size_t>>& by_class,
                        std::size_t num_classes, std::size_t min_count) {
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto it = by_class.find(static_cast<ClassId>(k));
    const std::size_t n = it == by_class.end() ? 0 : it->second.size();
    if (n < min_count) {
      throw ContractError("split_tasks: class " + std::to_string(k) + " has " + std::to_string(n) +
                          " samples, need at least " + std::to_string(min_count));
    }
  }
}

std::vector<ClassId> shuffled_order(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0 || num_classes % kClassesPerTask != 0) {
    throw ContractError("split_tasks: class count " + std::to_string(num_classes) +
                        " must be a positive multiple of 2 (two classes per task)");
  }
  std::vector<ClassId> order(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) order[k] = static_cast<ClassId>(k);
  auto rng = keyed_rng(seed, 0x5151);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw IoError("missing dataset descriptor " + meta_path.string());
  Dataset ds;
  try {
    const auto j = nlohmann::json::parse(meta_in);
    ds.meta.channels = j.at("channels").get<std::size_t>();
    ds.meta.length = j.at("length").get<std::size_t>();
    ds.meta.classes = j.at("classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json: " + std::string(e.what()));
  }
  if (ds.meta.channels == 0 || ds.meta.length == 0 || ds.meta.classes == 0) {
    throw FormatError("meta.json: channels, length and classes must be positive");
  }
  for (const char* name : {"train.csv", "test.csv"}) {
    if (!fs::exists(dir / name)) throw IoError("missing dataset file " + (dir / name).string());
  }
  ds.train = read_rows(dir / "train.csv", ds.meta);
  ds.test = read_rows(dir / "test.csv", ds.meta);

  std::set<ClassId> seen;
  for (const auto& s : ds.train) seen.insert(s.label);
  for (std::size_t k = 0; k < ds.meta.classes; ++k) {
    if (!seen.count(static_cast<ClassId>(k))) {
      throw FormatError("dataset labels are not contiguous: class " + std::to_string(k) +
                        " of " + std::to_string(ds.meta.classes) + " declared has no train rows");
    }
  }
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir);
  std::ofstream meta(dir / "meta.json");
  if (!meta) throw IoError("cannot write " + (dir / "meta.json").string());
  meta << nlohmann::json{{"channels", ds.meta.channels},
                         {"length", ds.meta.length},
                         {"classes", ds.meta.classes}}
              .dump(2)
       << '\n';
  write_rows(dir / "train.csv", ds.train);
  write_rows(dir / "test.csv", ds.test);
}

std::vector<TimeSeriesSample> make_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.classes == 0 || cfg.classes % kClassesPerTask != 0) {
    throw ContractError("make_synthetic: class count " + std::to_string(cfg.classes) +
                        " must be even (two classes per task)");
  }
  require(cfg.n_per_class >= 8, "make_synthetic: n_per_class must be at least 8");
  require(cfg.channels >= 1 && cfg.length >= 1, "make_synthetic: empty sample shape");
  require(cfg.drift_profile >= 0.0f && cfg.drift_profile < 1.0f,
          "make_synthetic: drift_profile must be in [0, 1)");
  require(cfg.noise_sigma >= 0.0f, "make_synthetic: negative noise");

  auto shared_rng = keyed_rng(seed, 0xABCDEFull);
  const Template shared = make_template(shared_rng, cfg.channels, cfg.length);
  const float rho = cfg.drift_profile;

  std::vector<TimeSeriesSample> out;
  out.reserve(cfg.classes * cfg.n_per_class);
  auto noise_rng = keyed_rng(seed, 0x1234ull);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    auto rng = keyed_rng(seed, 1000 + k);
    const Template own = make_template(rng, cfg.channels, cfg.length);
    for (std::size_t n = 0; n < cfg.n_per_class; ++n) {
      std::vector<float> v(cfg.channels * cfg.length);
      for (std::size_t i = 0; i < v.size(); ++i) {
        const float z = noise(noise_rng);
        v[i] = (1.0f - rho) * own.values[i] + rho * shared.values[i] + cfg.noise_sigma * z;
      }
      TimeSeriesSample s;
      s.label = static_cast<ClassId>(k);
      s.values = Tensor::from({cfg.channels, cfg.length}, std::move(v));
      out.push_back(std::move(s));
    }
  }
  return out;
}

TaskStream split_tasks(std::span<const TimeSeriesSample> samples, std::size_t num_classes,
                       std::uint64_t seed) {
  TaskStream stream;
  stream.seed = seed;
  stream.class_order = shuffled_order(num_classes, seed);

  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const ClassId c = samples[i].label;
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw ContractError("split_tasks: label " + std::to_string(c) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    by_class[c].push_back(i);
  }
  check_class_counts(by_class, num_classes, 5);

  for (std::size_t t = 0; t < num_classes / kClassesPerTask; ++t) {
    Task task;
    task.id = static_cast<int>(t + 1);
    for (std::size_t j = 0; j < kClassesPerTask; ++j) {
      task.classes.push_back(stream.class_order[t * kClassesPerTask + j]);
    }
    std::sort(task.classes.begin(), task.classes.end());
    for (ClassId c : task.classes) {
      auto idx = by_class[c];
      auto rng = keyed_rng(seed, 0x77000ull + static_cast<std::uint64_t>(c));
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t n = idx.size();
      const std::size_t n_test = std::max<std::size_t>(1, std::llround(0.2 * double(n)));
      const std::size_t n_val = std::max<std::size_t>(1, std::llround(0.1 * double(n)));
      const std::size_t n_train = n - n_test - n_val;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = samples[idx[i]];
        if (i < n_train) {
          task.train.push_back(s);
        } else if (i < n_train + n_val) {
          task.val.push_back(s);
        } else {
          task.test.push_back(s);
        }
      }
    }
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

TaskStream split_tasks(const Dataset& ds, std::uint64_t seed) {
  const std::size_t num_classes = ds.meta.classes;
  TaskStream stream;
  stream.seed = seed;
  stream.class_order = shuffled_order(num_classes, seed);

  std::map<ClassId, std::vector<std::size_t>> train_by_class, test_by_class;
  for (std::size_t i = 0; i < ds.train.size(); ++i) train_by_class[ds.train[i].label].push_back(i);
  for (std::size_t i = 0; i < ds.test.size(); ++i) test_by_class[ds.test[i].label].push_back(i);
  check_class_counts(train_by_class, num_classes, 3);
  check_class_counts(test_by_class, num_classes, 1);

  for (std::size_t t = 0; t < num_classes / kClassesPerTask; ++t) {
    Task task;
    task.id = static_cast<int>(t + 1);
    for (std::size_t j = 0; j < kClassesPerTask; ++j) {
      task.classes.push_back(stream.class_order[t * kClassesPerTask + j]);
    }
    std::sort(task.classes.begin(), task.classes.end());
    for (ClassId c : task.classes) {
      auto idx = train_by_class[c];
      auto rng = keyed_rng(seed, 0x77000ull + static_cast<std::uint64_t>(c));
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::size_t n_val = std::max<std::size_t>(1, std::llround(double(idx.size()) / 8.0));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < idx.size() - n_val ? task.train : task.val).push_back(ds.train[idx[i]]);
      }
      for (auto i : test_by_class[c]) task.test.push_back(ds.test[i]);
    }
    stream.tasks.push_back(std::move(task));
  }
  validate_stream(stream);
  return stream;
}

void validate_stream(const TaskStream& stream) {
  std::set<ClassId> all;
  for (const auto& task : stream.tasks) {
    const std::set<ClassId> own(task.classes.begin(), task.classes.end());
    for (ClassId c : own) {
      if (!all.insert(c).second) {
        throw ContractError("task " + std::to_string(task.id) + " repeats class " +
                            std::to_string(c) + " from an earlier task");
      }
    }
    for (const auto* split : {&task.train, &task.val, &task.test}) {
      std::set<ClassId> present;
      for (const auto& s : *split) {
        if (!own.count(s.label)) {
          throw ContractError("task " + std::to_string(task.id) + " contains sample of class " +
                              std::to_string(s.label) + " outside its class set");
        }
        present.insert(s.label);
      }
      if (present != own) {
        throw ContractError("task " + std::to_string(task.id) +
                            " has a split missing one of its classes");
      }
    }
  }
  const std::set<ClassId> order(stream.class_order.begin(), stream.class_order.end());
  if (order != all) throw ContractError("task classes do not cover the class order");
}

// ---------------------------------------------------------------------------
// PCA

TimeSeriesSample ChannelProjection::apply(const TimeSeriesSample& s) const {
  const std::size_t c_in = in_channels();
  if (s.channels() != c_in) {
    throw DimensionError("channel projection expects " + std::to_string(c_in) +
                         " channels, sample has " + std::to_string(s.channels()));
  }
  const std::size_t k = out_channels(), len = s.length();
  auto x = s.values.data();
  auto w = components.data();
  std::vector<float> y(k * len, 0.0f);
  for (std::size_t o = 0; o < k; ++o)
    for (std::size_t c = 0; c < c_in; ++c) {
      const float wc = w[o * c_in + c];
      for (std::size_t t = 0; t < len; ++t) y[o * len + t] += wc * (x[c * len + t] - channel_mean[c]);
    }
  TimeSeriesSample out;
  out.label = s.label;
  out.values = Tensor::from({k, len}, std::move(y));
  return out;
}

ChannelProjection fit_channel_pca(std::span<const TimeSeriesSample> train, float ratio) {
  if (!(ratio > 0.0f && ratio <= 1.0f)) {
    throw ContractError("pca_reduce: ratio must be in (0, 1], got " + std::to_string(ratio));
  }
  require(!train.empty(), "pca_reduce: no training samples");
  const std::size_t c = train.front().channels();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c));
  std::size_t count = 0;
  for (const auto& s : train) {
    if (s.channels() != c) throw DimensionError("pca_reduce: inconsistent channel counts");
    auto x = s.values.data();
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[ch * s.length() + t];
      ++count;
    }
  }
  mean /= double(count);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(c, c);
  Eigen::VectorXd obs(c);
  for (const auto& s : train) {
    auto x = s.values.data();
    for (std::size_t t = 0; t < s.length(); ++t) {
      for (std::size_t ch = 0; ch < c; ++ch) obs[ch] = x[ch * s.length() + t] - mean[ch];
      cov.noalias() += obs * obs.transpose();
    }
  }
  cov /= double(count > 1 ? count - 1 : 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const std::size_t k = std::min<std::size_t>(
      c, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(double(ratio) * c - 1e-6))));

  ChannelProjection proj;
  proj.channel_mean.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) proj.channel_mean[ch] = static_cast<float>(mean[ch]);
  std::vector<float> comp(k * c);
  // Eigen returns ascending eigenvalues.
  for (std::size_t o = 0; o < k; ++o) {
    const Eigen::Index col = static_cast<Eigen::Index>(c - 1 - o);
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    for (std::size_t ch = 0; ch < c; ++ch) comp[o * c + ch] = static_cast<float>(v[ch]);
    proj.explained_variance.push_back(std::max(0.0, eig.eigenvalues()[col]));
  }
  proj.components = Tensor::from({k, c}, std::move(comp));
  return proj;
}

PcaResult pca_reduce(std::span<const TimeSeriesSample> task_train,
                     std::span<const TimeSeriesSample> task_eval, float ratio) {
  PcaResult r;
  r.projection = fit_channel_pca(task_train, ratio);
  for (const auto& s : task_train) r.train.push_back(r.projection.apply(s));
  for (const auto& s : task_eval) r.eval.push_back(r.projection.apply(s));
  return r;
}

void pca_reduce_stream(TaskStream& stream, float ratio) {
  for (auto& task : stream.tasks) {
    const auto proj = fit_channel_pca(task.train, ratio);
    for (auto* split : {&task.train, &task.val, &task.test}) {
      for (auto& s : *split) s = proj.apply(s);
    }
  }
}

}  // namespace tscil
