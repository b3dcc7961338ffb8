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
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <vector>

#include "test_support.hpp"
#include "tscil/data.hpp"
#include "tscil/error.hpp"

using namespace tscil;

namespace {

// Solves (A + lambda I) x = b for symmetric positive definite A by Cholesky.
std::vector<double> solve_spd(std::vector<double> a, std::vector<double> b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    a[j * n + j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / a[j * n + j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i * n + k] * b[k];
    b[i] /= a[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= a[k * n + i] * b[k];
    b[i] /= a[i * n + i];
  }
  return b;
}

// Ridge least-squares one-vs-all probe on flattened inputs; returns train accuracy.
double linear_probe_accuracy(const std::vector<TimeSeriesSample>& xs, std::size_t k) {
  const std::size_t d = xs.front().values.numel() + 1;
  std::vector<double> ata(d * d, 0.0);
  std::vector<std::vector<double>> atb(k, std::vector<double>(d, 0.0));
  auto row = [&](const TimeSeriesSample& s) {
    std::vector<double> r(s.values.data().begin(), s.values.data().end());
    r.push_back(1.0);
    return r;
  };
  for (const auto& s : xs) {
    const auto r = row(s);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) ata[i * d + j] += r[i] * r[j];
      for (std::size_t c = 0; c < k; ++c) atb[c][i] += r[i] * (s.label == ClassId(c) ? 1.0 : 0.0);
    }
  }
  for (std::size_t i = 0; i < d; ++i) ata[i * d + i] += 1e-3;
  std::vector<std::vector<double>> w;
  for (std::size_t c = 0; c < k; ++c) w.push_back(solve_spd(ata, atb[c], d));
  std::size_t correct = 0;
  for (const auto& s : xs) {
    const auto r = row(s);
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = std::inner_product(r.begin(), r.end(), w[c].begin(), 0.0);
      if (v > best_v) best_v = v, best = c;
    }
    correct += best == std::size_t(s.label);
  }
  return double(correct) / double(xs.size());
}

// Channel covariance over samples x time (double).
std::vector<double> channel_cov(const std::vector<TimeSeriesSample>& xs, std::size_t c) {
  std::vector<double> mean(c, 0.0), cov(c * c, 0.0);
  std::size_t n = 0;
  for (const auto& s : xs)
    for (std::size_t t = 0; t < s.length(); ++t, ++n)
      for (std::size_t i = 0; i < c; ++i) mean[i] += s.values(i, t);
  for (auto& m : mean) m /= double(n);
  for (const auto& s : xs)
    for (std::size_t t = 0; t < s.length(); ++t)
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j)
          cov[i * c + j] += (s.values(i, t) - mean[i]) * (s.values(j, t) - mean[j]);
  for (auto& v : cov) v /= double(n - 1);
  return cov;
}

std::vector<double> power_iteration(const std::vector<double>& a, std::size_t n) {
  std::vector<double> v(n, 1.0), next(n);
  for (int it = 0; it < 5000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = 0.0;
      for (std::size_t j = 0; j < n; ++j) next[i] += a[i * n + j] * v[j];
    }
    const double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i] = next[i] / norm;
  }
  return v;
}

double total_variance(const std::vector<TimeSeriesSample>& xs) {
  const std::size_t c = xs.front().channels();
  const auto cov = channel_cov(xs, c);
  double t = 0.0;
  for (std::size_t i = 0; i < c; ++i) t += cov[i * c + i];
  return t;
}

std::vector<TimeSeriesSample> random_series(std::size_t n, std::size_t c, std::size_t l,
                                            std::uint64_t seed) {
  std::vector<TimeSeriesSample> xs;
  const Tensor mix = tscil::testing::random_tensor({c, c}, seed + 1000);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor z = tscil::testing::random_tensor({c, l}, seed + i);
    xs.push_back({matmul(mix, z), 0});
  }
  return xs;
}

Dataset toy_dataset() {
  Dataset ds;
  ds.meta = {2, 4, 2};
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 8; ++i) {
      std::vector<float> v(8);
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = float(k) + 0.25f * float(i) + 0.5f * float(j);
      ds.train.push_back({Tensor::from({2, 4}, v), k});
      if (i < 3) ds.test.push_back({Tensor::from({2, 4}, v), k});
    }
  }
  return ds;
}

}  // namespace

TEST_CASE("load_dataset: writer/reader round trip") {
  const auto dir = tscil::testing::temp_dir("toy");
  const Dataset ds = toy_dataset();
  write_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  CHECK(back.meta.classes == 2);
  CHECK(back.meta.channels == 2);
  CHECK(back.meta.length == 4);
  REQUIRE(back.train.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(bit_equal(back.train[i].values, ds.train[i].values));
    CHECK(back.train[i].label == ds.train[i].label);
  }
}

TEST_CASE("load_dataset: wrong field count names the row") {
  const auto dir = tscil::testing::temp_dir("bad_row");
  write_dataset(dir, toy_dataset());
  {
    std::ofstream app(dir / "train.csv", std::ios::app);
    app << "1,0.5,0.5\n";
  }
  try {
    (void)load_dataset(dir);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("row 17") != std::string::npos);
  }
}

TEST_CASE("load_dataset: non-contiguous labels are rejected") {
  const auto dir = tscil::testing::temp_dir("gap");
  Dataset ds = toy_dataset();
  ds.meta.classes = 3;
  for (auto& s : ds.train)
    if (s.label == 1) s.label = 2;
  for (auto& s : ds.test)
    if (s.label == 1) s.label = 2;
  write_dataset(dir, ds);
  CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("class 1"), FormatError);
}

TEST_CASE("load_dataset: missing directory is an io error") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/tscil"), IoError);
}

TEST_CASE("make_synthetic: deterministic per seed") {
  SyntheticConfig c;
  c.classes = 4;
  c.n_per_class = 10;
  const auto a = make_synthetic(c, 5);
  const auto b = make_synthetic(c, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_equal(a[i].values, b[i].values));
    CHECK(a[i].label == b[i].label);
  }
  const auto other = make_synthetic(c, 6);
  CHECK_FALSE(bit_equal(a[0].values, other[0].values));
}

TEST_CASE("make_synthetic: zero noise makes every sample of a class identical") {
  SyntheticConfig c;
  c.classes = 4;
  c.n_per_class = 10;
  c.noise_sigma = 0.0f;
  const auto xs = make_synthetic(c, 1);
  for (const auto& a : xs)
    for (const auto& b : xs)
      if (a.label == b.label) CHECK(bit_equal(a.values, b.values));
}

TEST_CASE("make_synthetic: classes are linearly separable on raw inputs") {
  SyntheticConfig c;
  c.classes = 4;
  c.n_per_class = 100;
  const auto xs = make_synthetic(c, 3);
  CHECK(xs.size() == 400);
  for (const auto& s : xs)
    for (float v : s.values.data()) REQUIRE(std::isfinite(v));
  CHECK(linear_probe_accuracy(xs, 4) >= 0.9);
}

TEST_CASE("make_synthetic: invalid configs") {
  SyntheticConfig c;
  c.classes = 3;
  CHECK_THROWS_AS(make_synthetic(c, 0), ContractError);
  c.classes = 4;
  c.n_per_class = 2;
  CHECK_THROWS_AS(make_synthetic(c, 0), ContractError);
}

TEST_CASE("split_tasks: K=8 gives 4 disjoint two-class tasks covering all classes") {
  SyntheticConfig c;
  c.n_per_class = 20;
  const auto xs = make_synthetic(c, 1);
  const TaskStream st = split_tasks(xs, 8, 1);
  REQUIRE(st.tasks.size() == 4);
  std::set<ClassId> all;
  for (const auto& t : st.tasks) {
    CHECK(t.classes.size() == 2);
    CHECK_FALSE(t.train.empty());
    CHECK_FALSE(t.val.empty());
    CHECK_FALSE(t.test.empty());
    for (ClassId k : t.classes) CHECK(all.insert(k).second);
    for (const auto* part : {&t.train, &t.val, &t.test})
      for (const auto& s : *part)
        CHECK(std::find(t.classes.begin(), t.classes.end(), s.label) != t.classes.end());
  }
  CHECK(all == std::set<ClassId>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_NOTHROW(validate_stream(st));
}

TEST_CASE("split_tasks: different seeds shuffle differently") {
  SyntheticConfig c;
  c.n_per_class = 10;
  const auto xs = make_synthetic(c, 1);
  CHECK(split_tasks(xs, 8, 1).class_order != split_tasks(xs, 8, 2).class_order);
}

TEST_CASE("split_tasks: per-class 70/10/20 split") {
  SyntheticConfig c;
  c.classes = 2;
  c.n_per_class = 100;
  const TaskStream st = split_tasks(make_synthetic(c, 1), 2, 1);
  CHECK(st.tasks[0].train.size() == 140);
  CHECK(st.tasks[0].val.size() == 20);
  CHECK(st.tasks[0].test.size() == 40);
}

TEST_CASE("split_tasks: dataset with explicit test split keeps it") {
  const Dataset ds = toy_dataset();
  const TaskStream st = split_tasks(ds, 0);
  REQUIRE(st.tasks.size() == 1);
  CHECK(st.tasks[0].test.size() == ds.test.size());
  CHECK(st.tasks[0].train.size() + st.tasks[0].val.size() == ds.train.size());
}

TEST_CASE("pca_reduce: full ratio is a rotation that keeps total variance") {
  const auto xs = random_series(20, 3, 16, 1);
  const PcaResult r = pca_reduce(xs, xs, 1.0f);
  CHECK(r.projection.out_channels() == 3);
  CHECK(total_variance(r.train) == doctest::Approx(total_variance(xs)).epsilon(1e-5));
}

TEST_CASE("pca_reduce: constant channel is dropped at ratio 2/3") {
  auto xs = random_series(20, 3, 16, 2);
  for (auto& s : xs) {
    std::vector<float> v(s.values.data().begin(), s.values.data().end());
    for (std::size_t t = 0; t < 16; ++t) v[2 * 16 + t] = 4.0f;
    s.values = Tensor::from({3, 16}, v);
  }
  const PcaResult r = pca_reduce(xs, xs, 2.0f / 3.0f);
  CHECK(r.projection.out_channels() == 2);
  const double kept = r.projection.explained_variance[0] + r.projection.explained_variance[1];
  double all = 0.0;
  for (double v : r.projection.explained_variance) all += v;
  CHECK(kept / all == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(total_variance(r.train) == doctest::Approx(total_variance(xs)).epsilon(1e-5));
}

TEST_CASE("pca_reduce: top component matches a power-iteration oracle") {
  const auto xs = random_series(30, 3, 32, 3);
  const PcaResult r = pca_reduce(xs, xs, 1.0f / 3.0f);
  REQUIRE(r.projection.out_channels() == 1);
  const auto v = power_iteration(channel_cov(xs, 3), 3);
  double dot = 0.0;
  for (std::size_t i = 0; i < 3; ++i) dot += v[i] * r.projection.components(0, i);
  CHECK(std::abs(dot) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("pca_reduce: eval set uses the train fit") {
  const auto train = random_series(10, 3, 8, 4);
  const auto eval = random_series(5, 3, 8, 50);
  const PcaResult r = pca_reduce(train, eval, 2.0f / 3.0f);
  REQUIRE(r.eval.size() == 5);
  CHECK(bit_equal(r.eval[0].values, r.projection.apply(eval[0]).values));
}
