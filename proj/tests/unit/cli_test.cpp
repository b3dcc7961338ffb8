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

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "tscil/protocol.hpp"
#include "tscil_cli/cli.hpp"

using tscil::cli::cli_run;

namespace {

std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& method) {
  const auto p = dir / "cfg.json";
  std::ofstream os(p);
  os << R"({"dataset": {"kind": "synthetic", "K": 4, "C": 2, "L": 32, "n_per_class": 20},
            "model": {"D": 8, "n_blocks": 1, "patch_len": 4},
            "train": {"epochs_s1": 2, "epochs_s2": 1, "epochs_s3": 1, "S_n": 16},
            "method": ")"
     << method << R"("})";
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json without_clock(const std::filesystem::path& p) {
  auto j = nlohmann::json::parse(slurp(p));
  j.erase("wall_clock_seconds");
  return j;
}

int run(std::vector<std::string> args, std::string* err_out = nullptr) {
  args.insert(args.begin(), "tscil");
  std::ostringstream out, err;
  const int code = cli_run(args, out, err);
  if (err_out) *err_out = err.str();
  return code;
}

}  // namespace

TEST_CASE("cli: run writes the report files") {
  const auto dir = tscil::testing::temp_dir("cli_run");
  const auto cfg = write_config(dir, "FULL");
  REQUIRE(run({"run", "--config", cfg.string(), "--seed", "7", "--out", (dir / "r").string()}) == 0);
  for (const char* f : {"metrics.json", "accuracy_matrix.csv", "curves.csv", "drift.csv"})
    CHECK(std::filesystem::exists(dir / "r" / f));
}

TEST_CASE("cli: same seed twice gives identical reports") {
  const auto dir = tscil::testing::temp_dir("cli_det");
  const auto cfg = write_config(dir, "BASE_UCT");
  for (const char* o : {"a", "b"})
    REQUIRE(run({"run", "--config", cfg.string(), "--seed", "7", "--out", (dir / o).string()}) == 0);
  CHECK(without_clock(dir / "a" / "metrics.json") == without_clock(dir / "b" / "metrics.json"));
  CHECK(slurp(dir / "a" / "accuracy_matrix.csv") == slurp(dir / "b" / "accuracy_matrix.csv"));
}

TEST_CASE("cli: method ALL gives one drift series per strategy") {
  const auto dir = tscil::testing::temp_dir("cli_all");
  const auto cfg = write_config(dir, "FULL");
  REQUIRE(run({"run", "--config", cfg.string(), "--seed", "1", "--out", (dir / "r").string(),
               "--method", "ALL"}) == 0);
  std::istringstream drift(slurp(dir / "r" / "drift.csv"));
  std::string header;
  std::getline(drift, header);
  CHECK(std::count(header.begin(), header.end(), ',') == int(tscil::all_methods().size()));
  CHECK(std::filesystem::exists(dir / "r" / "accuracy_matrix_SDC.csv"));
}

TEST_CASE("cli: errors exit nonzero with a diagnostic") {
  const auto dir = tscil::testing::temp_dir("cli_err");
  const auto cfg = write_config(dir, "FULL");
  std::string err;
  CHECK(run({"run", "--config", cfg.string(), "--out", (dir / "r").string(), "--method", "NOPE"},
            &err) != 0);
  CHECK(err.find("valid") != std::string::npos);
  CHECK(run({"run", "--config", (dir / "missing.json").string(), "--out", "x"}, &err) != 0);
  CHECK_FALSE(err.empty());
  CHECK(run({"bogus"}) != 0);
  const auto bad = write_config(dir, "WRONG");
  CHECK(run({"run", "--config", bad.string(), "--out", (dir / "r").string()}, &err) != 0);
  CHECK(err.find("FULL") != std::string::npos);
}

TEST_CASE("cli: metrics recomputes from a matrix") {
  const auto dir = tscil::testing::temp_dir("cli_metrics");
  {
    std::ofstream os(dir / "m.csv");
    os << "0.9\n0.6,0.8\n0.5,0.7,0.9\n";
  }
  std::vector<std::string> args{"tscil", "metrics", "--matrix", (dir / "m.csv").string()};
  std::ostringstream out, err;
  REQUIRE(cli_run(args, out, err) == 0);
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j["A_T"].get<double>() == doctest::Approx(0.7));
  CHECK(j["F_T"].get<double>() == doctest::Approx(0.25));
}
