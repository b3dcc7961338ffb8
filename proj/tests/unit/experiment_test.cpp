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

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "tscil/experiment.hpp"

using namespace tscil;
using nlohmann::json;

namespace {

json tiny_config() {
  return json::parse(R"({
    "dataset": {"kind": "synthetic", "K": 4, "C": 2, "L": 32, "n_per_class": 20},
    "model": {"D": 8, "n_blocks": 1, "patch_len": 4},
    "train": {"epochs_s1": 2, "epochs_s2": 1, "epochs_s3": 1, "S_n": 16},
    "method": "FULL",
    "seeds": [1, 2]
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("parse_config: reads every section") {
  const ExperimentConfig c = parse_config(tiny_config());
  CHECK(c.dataset.classes == 4);
  CHECK(c.model.embed_dim == 8);
  CHECK(c.train.epochs_s1 == 2);
  CHECK(c.train.samples_per_class == 16);
  CHECK(c.methods == std::vector<Method>{Method::kFull});
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
}

TEST_CASE("parse_config: unknown keys and methods list the valid values") {
  json j = tiny_config();
  j["train"]["lr"] = 0.1;
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("max_lr"), UsageError);
  j = tiny_config();
  j["method"] = "FOO";
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("BASE_UCT"), UsageError);
  j = tiny_config();
  j["method"] = "ALL";
  CHECK(parse_config(j).methods.size() == all_methods().size());
  j = tiny_config();
  j["dataset"]["kind"] = "http";
  CHECK_THROWS_AS(parse_config(j), UsageError);
  j = tiny_config();
  j["seeds"] = json::array();
  CHECK_THROWS_AS(parse_config(j), UsageError);
}

TEST_CASE("prepare_stream: applies PCA and resolves channels") {
  json j = tiny_config();
  j["dataset"]["C"] = 4;
  j["dataset"]["pca_ratio"] = 0.5;
  const PreparedStream p = prepare_stream(parse_config(j), 1);
  CHECK(p.model.channels == 2);
  CHECK(p.stream.tasks[0].train[0].channels() == 2);
}

TEST_CASE("run_experiment and write_outputs") {
  const ExperimentConfig c = parse_config(tiny_config());
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.methods.size() == 1);
  CHECK(r.methods[0].runs.size() == 2);
  const auto dir = tscil::testing::temp_dir("outputs");
  write_outputs(dir, c, r);
  for (const char* f : {"metrics.json", "accuracy_matrix.csv", "curves.csv", "drift.csv"})
    CHECK(std::filesystem::exists(dir / f));

  const AccuracyMatrix m = AccuracyMatrix::read_csv(dir / "accuracy_matrix.csv");
  const json mj = json::parse(slurp(dir / "metrics.json"));
  const MetricSummary s = summarize(m);
  CHECK(mj["A_T"].get<double>() == s.final_accuracy);
  CHECK(mj["F_T"].get<double>() == *s.final_forgetting);
  CHECK(mj["A_cur"].get<double>() == s.learning_accuracy);
  CHECK(mj["per_task_A_i"].size() == 2);
  CHECK(mj["methods"]["FULL"]["seed_range"]["A_T_per_seed"].size() == 2);
}

TEST_CASE("mean_matrix: element-wise") {
  const std::vector<AccuracyMatrix> ms{AccuracyMatrix({{1.0}, {0.5, 0.5}}),
                                       AccuracyMatrix({{0.0}, {0.5, 1.0}})};
  const AccuracyMatrix m = mean_matrix(ms);
  CHECK(m.at(1, 1) == 0.5);
  CHECK(m.at(2, 2) == 0.75);
}
