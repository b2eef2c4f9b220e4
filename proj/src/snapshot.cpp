// Copyright 2026 The qgpf Authors.
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

#include "qgpf/snapshot.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>

#include "qgpf/cabaret.hpp"

namespace qgpf {

namespace {

constexpr std::array<char, 4> kMagic{'Q', 'G', 'F', '1'};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::size_t payload_size(const SnapshotHeader& h) {
  const auto cells = static_cast<std::size_t>(h.nx) * h.ny;
  const auto yfaces = static_cast<std::size_t>(h.nx) * (h.ny + 1);
  const auto layers = static_cast<std::size_t>(h.layers);
  const auto records = static_cast<std::size_t>(h.records);
  switch (h.kind) {
    case ValueKind::kPv:
    case ValueKind::kStreamFunction:
      return records * layers * cells;
    case ValueKind::kCellVelocity:
      return records * 2 * layers * cells;
    case ValueKind::kXiBasis:
      return records * layers * (cells + yfaces);
    case ValueKind::kModelState:
      return records * model_state_payload_size(h.nx, h.ny);
    case ValueKind::kTrajectory:
      return records * (1 + 2 * layers * cells);
  }
  throw FormatError("unknown value kind " + std::to_string(static_cast<int>(h.kind)), 16);
}

void write_snapshot(const std::filesystem::path& path, const SnapshotHeader& header, std::span<const double> values) {
  if (values.size() != payload_size(header)) throw InvalidArgument("snapshot payload does not match its header");
  std::vector<unsigned char> bytes;
  bytes.reserve(kSnapshotHeaderBytes + 8 * values.size());
  bytes.insert(bytes.end(), kMagic.begin(), kMagic.end());
  put_u32(bytes, static_cast<std::uint32_t>(header.nx));
  put_u32(bytes, static_cast<std::uint32_t>(header.ny));
  put_u32(bytes, static_cast<std::uint32_t>(header.layers));
  put_u32(bytes, static_cast<std::uint32_t>(header.kind));
  put_u32(bytes, static_cast<std::uint32_t>(header.records));
  put_u32(bytes, 0);
  put_u32(bytes, 0);
  for (double v : values) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string(), 0);
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < kSnapshotHeaderBytes) {
    throw FormatError("truncated header in " + path.string(), bytes.size());
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("bad magic in " + path.string(), 0);
  }
  Snapshot s;
  s.header.nx = static_cast<std::int32_t>(get_u32(&bytes[4]));
  s.header.ny = static_cast<std::int32_t>(get_u32(&bytes[8]));
  s.header.layers = static_cast<std::int32_t>(get_u32(&bytes[12]));
  s.header.kind = static_cast<ValueKind>(get_u32(&bytes[16]));
  s.header.records = static_cast<std::int32_t>(get_u32(&bytes[20]));
  if (s.header.nx <= 0 || s.header.ny <= 0) throw FormatError("non-positive grid size", 4);
  if (s.header.layers != kLayers) throw FormatError("layer count must be 2", 12);
  if (s.header.records < 0) throw FormatError("negative record count", 20);
  const std::size_t n = payload_size(s.header);
  const std::size_t expected = kSnapshotHeaderBytes + 8 * n;
  if (bytes.size() < expected) {
    throw FormatError("truncated payload in " + path.string() + ": expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes in " + path.string(), expected);
  s.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    s.values[k] = std::bit_cast<double>(get_u64(&bytes[kSnapshotHeaderBytes + 8 * k]));
  }
  return s;
}

void save_field(const std::filesystem::path& path, const LayeredField& field, ValueKind kind) {
  SnapshotHeader h{field.grid().nx(), field.grid().ny(), kLayers, kind, 1};
  write_snapshot(path, h, field.values());
}

LayeredField load_field(const std::filesystem::path& path, const Grid& grid, ValueKind kind) {
  auto s = read_snapshot(path);
  if (s.header.kind != kind) throw FormatError("unexpected value kind in " + path.string(), 16);
  if (s.header.nx != grid.nx() || s.header.ny != grid.ny()) {
    throw FormatError("grid mismatch in " + path.string(), 4);
  }
  if (s.header.records != 1) throw FormatError("expected a single record", 20);
  LayeredField f(grid);
  std::copy(s.values.begin(), s.values.end(), f.values().begin());
  return f;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace qgpf
