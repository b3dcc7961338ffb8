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
#include "tscil/checkpoint.hpp"
#include "tscil/error.hpp"

using namespace tscil;

TEST_CASE("checkpoint: round trip preserves every section bit-exactly") {
  ModelState m(tscil::testing::small_model());
  m.heads().add_head(1, {2, 5}, 16, 1);
  m.heads().add_head(2, {0, 1}, 16, 2);
  m.adapters()[1].up = tscil::testing::random_tensor(m.adapters()[1].up.shape(), 3);
  const DriftCompensator d{tscil::testing::random_tensor({16, 16}, 4)};
  const auto dir = tscil::testing::temp_dir("ckpt");
  save_checkpoint(dir / "m.bin", m, &d);

  const Checkpoint back = load_checkpoint(dir / "m.bin");
  REQUIRE(back.dcn.has_value());
  CHECK(bit_equal(back.dcn->weight, d.weight));
  for (std::size_t i = 0; i < m.adapters().size(); ++i) {
    CHECK(bit_equal(back.model.adapters()[i].down, m.adapters()[i].down));
    CHECK(bit_equal(back.model.adapters()[i].up, m.adapters()[i].up));
  }
  const auto wa = m.backbone().weights(), wb = back.model.backbone().weights();
  REQUIRE(wa.size() == wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(bit_equal(wa[i], wb[i]));
  CHECK(back.model.heads().seen_classes() == m.heads().seen_classes());
  CHECK(bit_equal(back.model.heads().stacked_weights(), m.heads().stacked_weights()));

  SyntheticConfig sc;
  sc.classes = 2;
  sc.n_per_class = 8;
  const auto xs = make_synthetic(sc, 1);
  CHECK(bit_equal(back.model.features(xs), m.features(xs)));
}

TEST_CASE("checkpoint: without a compensator") {
  const ModelState m(tscil::testing::small_model());
  const auto dir = tscil::testing::temp_dir("ckpt2");
  save_checkpoint(dir / "m.bin", m);
  CHECK_FALSE(load_checkpoint(dir / "m.bin").dcn.has_value());
}

TEST_CASE("checkpoint: bad magic and truncation are format errors") {
  const auto dir = tscil::testing::temp_dir("ckpt3");
  {
    std::ofstream os(dir / "bad.bin", std::ios::binary);
    os << "NOTACKPT and more";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.bin"), FormatError);

  save_checkpoint(dir / "m.bin", ModelState(tscil::testing::small_model()));
  std::ifstream in(dir / "m.bin", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  {
    std::ofstream os(dir / "cut.bin", std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "cut.bin"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.bin"), IoError);
}

TEST_CASE("io: little-endian primitives") {
  std::stringstream ss;
  io::write_u32(ss, 0x01020304u);
  io::write_f32(ss, 1.5f);
  io::write_i32(ss, -7);
  const std::string b = ss.str();
  CHECK(b[0] == 0x04);
  CHECK(b[3] == 0x01);
  CHECK(io::read_u32(ss) == 0x01020304u);
  CHECK(io::read_f32(ss) == 1.5f);
  CHECK(io::read_i32(ss) == -7);
}
