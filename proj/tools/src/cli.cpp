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

#include "tscil_cli/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "tscil/error.hpp"
#include "tscil/experiment.hpp"
#include "tscil/metrics.hpp"

namespace tscil::cli {

namespace {

int do_run(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
           const std::optional<std::string>& method, bool write_log, std::ostream& out) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seeds = {*seed};
  if (method) {
    if (*method == "ALL") {
      cfg.methods = all_methods();
    } else {
      auto m = parse_method(*method);
      if (!m) throw UsageError("unknown method '" + *method + "'; valid: " + method_names() + ", ALL");
      cfg.methods = {*m};
    }
  }
  std::filesystem::create_directories(out_dir);
  std::optional<std::ofstream> log_stream;
  std::optional<JsonlRunLog> log;
  if (write_log) {
    log_stream.emplace(std::filesystem::path(out_dir) / "run_log.jsonl");
    log.emplace(*log_stream);
  }
  const ExperimentResult res = run_experiment(cfg, log ? &*log : nullptr);
  write_outputs(out_dir, cfg, res);
  for (const auto& mr : res.methods) {
    out << method_name(mr.method) << ": A_T=" << mr.metrics.final_accuracy;
    if (mr.metrics.final_forgetting) out << " F_T=" << *mr.metrics.final_forgetting;
    out << " A_cur=" << mr.metrics.learning_accuracy << '\n';
  }
  return 0;
}

int do_metrics(const std::string& matrix_path, std::ostream& out) {
  const AccuracyMatrix m = AccuracyMatrix::read_csv(matrix_path);
  out << metrics_json(summarize(m)).dump(2) << '\n';
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-incremental learning for time series with drift compensation"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  bool write_log = false;
  auto* run = app.add_subcommand("run", "Run an experiment and write reports");
  run->add_option("--config", config_path, "JSON config file")->required();
  run->add_option("--seed", seed, "Run seed (default: the config's seeds)");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--method", method, "Method name or ALL (overrides config)");
  run->add_flag("--log", write_log, "Write run_log.jsonl");

  std::string matrix_path;
  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from an accuracy matrix");
  metrics->add_option("--matrix", matrix_path, "Accuracy matrix CSV")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (run->parsed()) return do_run(config_path, seed, out_dir, method, write_log, out);
    return do_metrics(matrix_path, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tscil::cli
