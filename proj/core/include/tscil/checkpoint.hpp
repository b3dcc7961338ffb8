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

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tscil/dcn.hpp"
#include "tscil/model.hpp"
#include "tscil/tensor.hpp"

namespace tscil {

// Binary layout shared by checkpoints and covariance dumps. All integers and
// floats are little-endian.
//
//   magic[8] | u32 version | <header fields> | u32 n_sections | sections...
//   section: u32 name_len | name | u32 ndim | u64 dims[ndim] | f32 data[prod(dims)]

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::array<char, 8> kCheckpointMagic = {'T', 'S', 'C', 'I', 'L', 'C', 'K', 'P'};
inline constexpr std::array<char, 8> kCovarianceMagic = {'T', 'S', 'C', 'I', 'L', 'C', 'O', 'V'};

struct NamedTensor {
  std::string name;
  Tensor value;
};

namespace io {

void write_u32(std::ostream& os, std::uint32_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f32(std::ostream& os, float v);
std::uint32_t read_u32(std::istream& is);
std::int32_t read_i32(std::istream& is);
float read_f32(std::istream& is);

void write_sections(std::ostream& os, const std::vector<NamedTensor>& sections);
std::vector<NamedTensor> read_sections(std::istream& is);

void write_magic(std::ostream& os, const std::array<char, 8>& magic);
void expect_magic(std::istream& is, const std::array<char, 8>& magic, const std::string& what);

}  // namespace io

struct Checkpoint {
  ModelState model;
  std::optional<DriftCompensator> dcn;
};

/// Header: magic, version, D, n_blocks, r, seen classes, then the layout
/// fields needed to rebuild the model (channels, patch_len, hidden, scales,
/// per-head task/classes). Sections in declaration order: patch embedding,
/// per-block w1/b1/w2/b2, per-adapter down/up, per-head weights, optional dcn.
void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const DriftCompensator* dcn = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tscil
