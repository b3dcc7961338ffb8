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

#include "tscil/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tscil/error.hpp"

namespace tscil {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace io {

namespace {

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("unexpected end of binary file");
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
void write_i32(std::ostream& os, std::int32_t v) { write_raw(os, v); }
void write_f32(std::ostream& os, float v) { write_raw(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_raw<std::uint32_t>(is); }
std::int32_t read_i32(std::istream& is) { return read_raw<std::int32_t>(is); }
float read_f32(std::istream& is) { return read_raw<float>(is); }

void write_magic(std::ostream& os, const std::array<char, 8>& magic) {
  os.write(magic.data(), magic.size());
  write_u32(os, kFormatVersion);
}

void expect_magic(std::istream& is, const std::array<char, 8>& magic, const std::string& what) {
  std::array<char, 8> got{};
  is.read(got.data(), got.size());
  if (!is || got != magic) throw FormatError(what + ": bad magic");
  const auto version = read_u32(is);
  if (version != kFormatVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
}

void write_sections(std::ostream& os, const std::vector<NamedTensor>& sections) {
  write_u32(os, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    write_u32(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_u32(os, static_cast<std::uint32_t>(s.value.ndim()));
    for (auto e : s.value.shape()) write_raw<std::uint64_t>(os, e);
    const auto d = s.value.data();
    os.write(reinterpret_cast<const char*>(d.data()),
             static_cast<std::streamsize>(d.size() * sizeof(float)));
  }
}

std::vector<NamedTensor> read_sections(std::istream& is) {
  const auto n = read_u32(is);
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor s;
    const auto len = read_u32(is);
    if (len > 4096) throw FormatError("section name too long");
    s.name.resize(len);
    is.read(s.name.data(), len);
    const auto ndim = read_u32(is);
    if (ndim == 0 || ndim > 8) throw FormatError("section " + s.name + ": bad rank");
    Shape shape(ndim);
    for (auto& e : shape) e = static_cast<std::size_t>(read_raw<std::uint64_t>(is));
    const auto count = shape_numel(shape);
    if (count == 0 || count > (std::size_t{1} << 28)) {
      throw FormatError("section " + s.name + ": bad size");
    }
    std::vector<float> data(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw FormatError("section " + s.name + ": truncated");
    s.value = Tensor::from(std::move(shape), std::move(data));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace io

void save_checkpoint(const std::filesystem::path& path, const ModelState& model,
                     const DriftCompensator* dcn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  const auto& bb = model.backbone();
  const auto& heads = model.heads();
  const std::size_t r = model.adapters().front().down.cols();

  io::write_magic(os, kCheckpointMagic);
  io::write_u32(os, static_cast<std::uint32_t>(bb.embed_dim()));
  io::write_u32(os, static_cast<std::uint32_t>(bb.n_blocks()));
  io::write_u32(os, static_cast<std::uint32_t>(r));
  const auto seen = heads.seen_classes();
  io::write_u32(os, static_cast<std::uint32_t>(seen.size()));
  for (ClassId c : seen) io::write_i32(os, c);

  io::write_u32(os, static_cast<std::uint32_t>(bb.channels()));
  io::write_u32(os, static_cast<std::uint32_t>(bb.patch_len()));
  io::write_f32(os, model.adapters().front().scale);
  io::write_f32(os, heads.logit_scale());
  io::write_f32(os, heads.margin());
  io::write_u32(os, static_cast<std::uint32_t>(heads.size()));
  for (const auto& h : heads.heads()) {
    io::write_i32(os, h.task);
    io::write_u32(os, static_cast<std::uint32_t>(h.classes.size()));
    for (ClassId c : h.classes) io::write_i32(os, c);
  }
  io::write_u32(os, dcn ? 1u : 0u);

  std::vector<NamedTensor> sections;
  sections.push_back({"backbone.patch_embed", bb.patch_embed()});
  for (std::size_t i = 0; i < bb.n_blocks(); ++i) {
    const auto& b = bb.blocks()[i];
    const std::string p = "backbone.block" + std::to_string(i) + ".";
    sections.push_back({p + "w1", b.w1});
    sections.push_back({p + "b1", b.b1});
    sections.push_back({p + "w2", b.w2});
    sections.push_back({p + "b2", b.b2});
  }
  for (std::size_t i = 0; i < model.adapters().size(); ++i) {
    const std::string p = "adapter" + std::to_string(i) + ".";
    sections.push_back({p + "down", model.adapters()[i].down});
    sections.push_back({p + "up", model.adapters()[i].up});
  }
  for (const auto& h : heads.heads()) {
    sections.push_back({"head.task" + std::to_string(h.task), h.weights});
  }
  if (dcn) sections.push_back({"dcn.weight", dcn->weight});
  io::write_sections(os, sections);
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  io::expect_magic(is, kCheckpointMagic, "checkpoint");
  const auto dim = io::read_u32(is);
  const auto n_blocks = io::read_u32(is);
  const auto r = io::read_u32(is);
  const auto n_seen = io::read_u32(is);
  std::vector<ClassId> seen(n_seen);
  for (auto& c : seen) c = io::read_i32(is);
  const auto channels = io::read_u32(is);
  const auto patch_len = io::read_u32(is);
  const float adapter_scale = io::read_f32(is);
  const float logit_scale = io::read_f32(is);
  const float margin = io::read_f32(is);
  const auto n_heads = io::read_u32(is);
  struct HeadMeta {
    int task;
    std::vector<ClassId> classes;
  };
  std::vector<HeadMeta> head_meta(n_heads);
  for (auto& h : head_meta) {
    h.task = io::read_i32(is);
    h.classes.resize(io::read_u32(is));
    for (auto& c : h.classes) c = io::read_i32(is);
  }
  const bool has_dcn = io::read_u32(is) != 0;
  const auto sections = io::read_sections(is);

  const std::size_t expected = 1 + 4 * n_blocks + 2 * n_blocks + n_heads + (has_dcn ? 1 : 0);
  if (sections.size() != expected) {
    throw FormatError("checkpoint: expected " + std::to_string(expected) + " sections, found " +
                      std::to_string(sections.size()));
  }
  std::size_t k = 0;
  const Tensor patch_embed = sections[k++].value;
  std::vector<MlpBlock> blocks(n_blocks);
  for (auto& b : blocks) {
    b.w1 = sections[k++].value;
    b.b1 = sections[k++].value;
    b.w2 = sections[k++].value;
    b.b2 = sections[k++].value;
  }
  auto backbone = std::make_shared<const FrozenBackbone>(channels, patch_len, patch_embed, blocks);
  if (backbone->embed_dim() != dim) throw FormatError("checkpoint: embed dim mismatch");

  std::vector<Adapter> adapters(n_blocks);
  for (auto& a : adapters) {
    a.down = sections[k++].value;
    a.up = sections[k++].value;
    a.scale = adapter_scale;
    if (a.down.cols() != r) throw FormatError("checkpoint: adapter bottleneck mismatch");
    a.down.set_requires_grad(true);
    a.up.set_requires_grad(true);
  }
  HeadBank bank(logit_scale, margin);
  for (const auto& h : head_meta) {
    Tensor w = sections[k++].value;
    if (w.rows() != h.classes.size() || w.cols() != dim) {
      throw FormatError("checkpoint: head shape mismatch for task " + std::to_string(h.task));
    }
    w.set_requires_grad(true);
    bank.heads().push_back({h.task, h.classes, w});
  }
  if (bank.seen_classes() != seen) throw FormatError("checkpoint: seen-class list mismatch");

  Checkpoint ck{ModelState(backbone, std::move(adapters), std::move(bank)), std::nullopt};
  if (has_dcn) {
    ck.dcn = DriftCompensator{sections[k++].value};
    if (ck.dcn->weight.rows() != dim || ck.dcn->weight.cols() != dim) {
      throw FormatError("checkpoint: dcn shape mismatch");
    }
  }
  return ck;
}

}  // namespace tscil
