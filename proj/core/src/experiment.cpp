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

#include "tscil/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>

#include "tscil/error.hpp"

namespace tscil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

void check_keys(const json& obj, const std::string& section, const std::vector<std::string>& valid) {
  if (!obj.is_object()) throw UsageError("config: '" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(valid.begin(), valid.end(), key) == valid.end()) {
      throw UsageError("config: unknown key '" + key + "' in '" + section + "'; valid keys: " +
                       join(valid));
    }
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("config: '" + section + "." + key + "' has the wrong type");
  }
}

std::vector<Method> parse_methods(const json& j) {
  std::vector<std::string> names;
  if (j.is_string()) {
    names.push_back(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_string()) throw UsageError("config: 'method' entries must be strings");
      names.push_back(e.get<std::string>());
    }
  } else {
    throw UsageError("config: 'method' must be a name or a list of names");
  }
  std::vector<Method> out;
  for (const auto& n : names) {
    if (n == "ALL") return all_methods();
    auto m = parse_method(n);
    if (!m) throw UsageError("unknown method '" + n + "'; valid: " + method_names() + ", ALL");
    out.push_back(*m);
  }
  if (out.empty()) throw UsageError("config: empty method list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  check_keys(j, "<root>", {"dataset", "model", "train", "method", "seeds"});
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "path", "K", "C", "L", "n_per_class", "pca_ratio", "noise",
                "drift_profile"});
    std::string kind = "synthetic";
    read_opt(d, "kind", kind, "dataset");
    if (kind == "synthetic") {
      cfg.dataset.kind = DatasetConfig::Kind::kSynthetic;
    } else if (kind == "directory") {
      cfg.dataset.kind = DatasetConfig::Kind::kDirectory;
      if (!d.contains("path")) throw UsageError("config: dataset.kind=directory needs 'path'");
      cfg.dataset.path = d.at("path").get<std::string>();
    } else {
      throw UsageError("config: dataset.kind '" + kind + "' invalid; valid: synthetic, directory");
    }
    read_opt(d, "K", cfg.dataset.classes, "dataset");
    read_opt(d, "C", cfg.dataset.channels, "dataset");
    read_opt(d, "L", cfg.dataset.length, "dataset");
    read_opt(d, "n_per_class", cfg.dataset.n_per_class, "dataset");
    read_opt(d, "noise", cfg.dataset.noise, "dataset");
    read_opt(d, "drift_profile", cfg.dataset.drift_profile, "dataset");
    if (d.contains("pca_ratio") && !d.at("pca_ratio").is_null()) {
      float r = 1.0f;
      read_opt(d, "pca_ratio", r, "dataset");
      cfg.dataset.pca_ratio = r;
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model", {"D", "n_blocks", "r", "hidden", "patch_len", "s", "s_c", "m", "seed"});
    read_opt(m, "D", cfg.model.embed_dim, "model");
    read_opt(m, "n_blocks", cfg.model.n_blocks, "model");
    read_opt(m, "r", cfg.model.bottleneck, "model");
    read_opt(m, "hidden", cfg.model.hidden, "model");
    cfg.model.patch_len = 0;
    read_opt(m, "patch_len", cfg.model.patch_len, "model");
    read_opt(m, "seed", cfg.model.seed, "model");
    read_opt(m, "s", cfg.train.adapter_scale, "model");
    read_opt(m, "s_c", cfg.train.logit_scale, "model");
    read_opt(m, "m", cfg.train.margin, "model");
  } else {
    cfg.model.patch_len = 0;
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, "train",
               {"max_lr", "batch", "epochs_s1", "epochs_s2", "epochs_s3", "alpha", "beta", "S_n",
                "momentum", "reinit_heads_for_uct", "sdc_sigma"});
    read_opt(t, "max_lr", cfg.train.max_lr, "train");
    read_opt(t, "batch", cfg.train.batch_size, "train");
    read_opt(t, "epochs_s1", cfg.train.epochs_s1, "train");
    read_opt(t, "epochs_s2", cfg.train.epochs_s2, "train");
    read_opt(t, "epochs_s3", cfg.train.epochs_s3, "train");
    read_opt(t, "alpha", cfg.train.alpha, "train");
    read_opt(t, "beta", cfg.train.beta, "train");
    read_opt(t, "S_n", cfg.train.samples_per_class, "train");
    read_opt(t, "momentum", cfg.train.momentum, "train");
    read_opt(t, "reinit_heads_for_uct", cfg.train.reinit_heads_for_uct, "train");
    read_opt(t, "sdc_sigma", cfg.train.sdc_kernel_sigma, "train");
  }
  if (j.contains("method")) cfg.methods = parse_methods(j.at("method"));
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw UsageError("config: 'seeds' must be a non-empty list");
    cfg.seeds.clear();
    for (const auto& e : s) {
      if (!e.is_number_unsigned()) throw UsageError("config: seeds must be non-negative integers");
      cfg.seeds.push_back(e.get<std::uint64_t>());
    }
  }
  try {
    cfg.train.validate();
  } catch (const ContractError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (auto m : cfg.methods) methods.push_back(method_name(m));
  json dataset = {{"kind", cfg.dataset.kind == DatasetConfig::Kind::kSynthetic ? "synthetic"
                                                                                 : "directory"},
                  {"K", cfg.dataset.classes},
                  {"C", cfg.dataset.channels},
                  {"L", cfg.dataset.length},
                  {"n_per_class", cfg.dataset.n_per_class},
                  {"noise", cfg.dataset.noise},
                  {"drift_profile", cfg.dataset.drift_profile}};
  if (cfg.dataset.kind == DatasetConfig::Kind::kDirectory) dataset["path"] = cfg.dataset.path.string();
  if (cfg.dataset.pca_ratio) dataset["pca_ratio"] = *cfg.dataset.pca_ratio;
  return {{"dataset", dataset},
          {"model",
           {{"D", cfg.model.embed_dim},
            {"n_blocks", cfg.model.n_blocks},
            {"r", cfg.model.bottleneck_dim()},
            {"hidden", cfg.model.hidden_dim()},
            {"patch_len", cfg.model.patch_len},
            {"seed", cfg.model.seed},
            {"s", cfg.train.adapter_scale},
            {"s_c", cfg.train.logit_scale},
            {"m", cfg.train.margin}}},
          {"train",
           {{"max_lr", cfg.train.max_lr},
            {"batch", cfg.train.batch_size},
            {"epochs_s1", cfg.train.epochs_s1},
            {"epochs_s2", cfg.train.epochs_s2},
            {"epochs_s3", cfg.train.epochs_s3},
            {"alpha", cfg.train.alpha},
            {"beta", cfg.train.beta},
            {"S_n", cfg.train.samples_per_class},
            {"momentum", cfg.train.momentum}}},
          {"method", methods},
          {"seeds", cfg.seeds}};
}

PreparedStream prepare_stream(const ExperimentConfig& cfg, std::uint64_t seed) {
  PreparedStream out;
  std::size_t length = 0;
  if (cfg.dataset.kind == DatasetConfig::Kind::kSynthetic) {
    SyntheticConfig sc;
    sc.classes = cfg.dataset.classes;
    sc.channels = cfg.dataset.channels;
    sc.length = cfg.dataset.length;
    sc.n_per_class = cfg.dataset.n_per_class;
    sc.noise_sigma = cfg.dataset.noise;
    sc.drift_profile = cfg.dataset.drift_profile;
    const auto samples = make_synthetic(sc, seed);
    out.stream = split_tasks(samples, sc.classes, seed);
    length = sc.length;
  } else {
    const Dataset ds = load_dataset(cfg.dataset.path);
    out.stream = split_tasks(ds, seed);
    length = ds.meta.length;
  }
  if (cfg.dataset.pca_ratio) pca_reduce_stream(out.stream, *cfg.dataset.pca_ratio);

  out.model = cfg.model;
  out.model.channels = out.stream.tasks.front().train.front().channels();
  if (out.model.patch_len == 0) out.model.patch_len = default_patch_len(length);
  return out;
}

const MethodResult& ExperimentResult::at(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return r;
  throw ContractError("experiment has no result for method " + std::string(method_name(m)));
}

AccuracyMatrix mean_matrix(const std::vector<AccuracyMatrix>& ms) {
  require(!ms.empty(), "mean_matrix: no matrices");
  AccuracyMatrix out;
  for (std::size_t i = 1; i <= ms.front().tasks(); ++i) {
    std::vector<double> row(i, 0.0);
    for (const auto& m : ms) {
      for (std::size_t j = 1; j <= i; ++j) row[j - 1] += m.at(i, j);
    }
    for (auto& v : row) v /= double(ms.size());
    out.append_row(std::move(row));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunLog* log) {
  require(!cfg.seeds.empty(), "run_experiment: no seeds");
  require(!cfg.methods.empty(), "run_experiment: no methods");
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.seeds = cfg.seeds;
  for (Method m : cfg.methods) {
    MethodResult mr;
    mr.method = m;
    res.methods.push_back(std::move(mr));
  }
  for (std::uint64_t seed : cfg.seeds) {
    const PreparedStream prepared = prepare_stream(cfg, seed);
    for (auto& mr : res.methods) {
      StrategyConfig sc = cfg.train;
      sc.method = mr.method;
      if (log) log->event({{"event", "run_start"}, {"method", method_name(mr.method)}, {"seed", seed}});
      mr.runs.push_back(run_stream(prepared.stream, prepared.model, sc, seed, log));
    }
  }
  for (auto& mr : res.methods) {
    std::vector<AccuracyMatrix> ms;
    for (const auto& r : mr.runs) ms.push_back(r.accuracy);
    mr.mean_accuracy = mean_matrix(ms);
    mr.metrics = summarize(mr.mean_accuracy);
    const std::size_t t = mr.mean_accuracy.tasks();
    mr.mean_drift.assign(t, std::nullopt);
    for (std::size_t i = 0; i < t; ++i) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : mr.runs) {
        if (i < r.drift.size() && r.drift[i]) {
          sum += *r.drift[i];
          ++n;
        }
      }
      if (n) mr.mean_drift[i] = sum / double(n);
    }
  }
  res.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

nlohmann::json metrics_json(const MetricSummary& m) {
  return {{"A_T", m.final_accuracy},
          {"F_T", optional_json(m.final_forgetting)},
          {"A_cur", m.learning_accuracy},
          {"per_task_A_i", m.accuracy_curve}};
}

namespace {

json seed_range(const MethodResult& mr) {
  double lo = 1.0, hi = 0.0, sum = 0.0;
  json per_seed = json::array();
  for (const auto& r : mr.runs) {
    const double a = r.metrics.final_accuracy;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
    sum += a;
    per_seed.push_back(a);
  }
  return {{"A_T_mean", sum / double(mr.runs.size())},
          {"A_T_min", lo},
          {"A_T_max", hi},
          {"A_T_per_seed", per_seed}};
}

}  // namespace

void write_outputs(const fs::path& dir, const ExperimentConfig& cfg,
                   const ExperimentResult& result) {
  require(!result.methods.empty(), "write_outputs: empty result");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const MethodResult& primary = result.methods.front();
  write_text(dir / "accuracy_matrix.csv", primary.mean_accuracy.to_csv());
  if (result.methods.size() > 1) {
    for (const auto& mr : result.methods) {
      write_text(dir / ("accuracy_matrix_" + std::string(method_name(mr.method)) + ".csv"),
                 mr.mean_accuracy.to_csv());
    }
  }

  json metrics = metrics_json(primary.metrics);
  metrics["method"] = method_name(primary.method);
  metrics["seeds"] = result.seeds;
  json methods = json::object();
  for (const auto& mr : result.methods) {
    json m = metrics_json(mr.metrics);
    m["seed_range"] = seed_range(mr);
    std::size_t dcn = 0, checks = 0;
    for (const auto& r : mr.runs) {
      dcn += r.dcn_trainings;
      checks += r.freeze_checks;
    }
    m["dcn_trainings"] = dcn;
    m["freeze_checks"] = checks;
    json drift = json::array();
    for (const auto& d : mr.mean_drift) drift.push_back(optional_json(d));
    m["drift"] = drift;
    methods[std::string(method_name(mr.method))] = m;
  }
  metrics["methods"] = methods;
  metrics["config"] = config_to_json(cfg);
  metrics["wall_clock_seconds"] = result.wall_clock_seconds;
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");

  const std::size_t t = primary.mean_accuracy.tasks();
  std::string curves = "task";
  std::string drift = "task";
  for (const auto& mr : result.methods) {
    curves += "," + std::string(method_name(mr.method));
    drift += "," + std::string(method_name(mr.method));
  }
  curves += '\n';
  drift += '\n';
  for (std::size_t i = 1; i <= t; ++i) {
    curves += std::to_string(i);
    drift += std::to_string(i);
    for (const auto& mr : result.methods) {
      curves += "," + fmt_double(mr.metrics.accuracy_curve[i - 1]);
      drift += ",";
      if (mr.mean_drift[i - 1]) drift += fmt_double(*mr.mean_drift[i - 1]);
    }
    curves += '\n';
    drift += '\n';
  }
  write_text(dir / "curves.csv", curves);
  write_text(dir / "drift.csv", drift);
}

}  // namespace tscil
