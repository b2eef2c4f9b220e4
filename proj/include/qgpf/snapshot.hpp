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

#ifndef QGPF_SNAPSHOT_HPP
#define QGPF_SNAPSHOT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Binary field snapshots.
 *
 * Layout: a 32-byte header of eight little-endian int32 words
 *
 *     [0] magic "QGF1"  [1] nx  [2] ny  [3] layer count  [4] value kind
 *     [5] record count  [6] reserved (0)  [7] reserved (0)
 *
 * followed by little-endian IEEE-754 doubles, row-major, layer-outermost.
 * The payload length is a function of the header (see payload_size()).
 */

namespace qgpf {

enum class ValueKind : std::int32_t {
  kPv = 1,             ///< LayeredField of PV
  kStreamFunction = 2, ///< LayeredField of psi
  kCellVelocity = 3,   ///< u then v, each a LayeredField
  kXiBasis = 4,        ///< per mode, per layer: x-face xi^u then y-face xi^v; records = K
  kModelState = 5,     ///< full CABARET state (see cabaret.hpp)
  kTrajectory = 6,     ///< per record: time, u, v (cell velocity); records = frame count
};

struct SnapshotHeader {
  std::int32_t nx = 0;
  std::int32_t ny = 0;
  std::int32_t layers = kLayers;
  ValueKind kind = ValueKind::kPv;
  std::int32_t records = 1;
};

struct Snapshot {
  SnapshotHeader header;
  std::vector<double> values;
};

inline constexpr std::size_t kSnapshotHeaderBytes = 32;

/// Number of doubles that follow a header of this shape.
std::size_t payload_size(const SnapshotHeader& header);

void write_snapshot(const std::filesystem::path& path, const SnapshotHeader& header, std::span<const double> values);

/// Throws FormatError naming the byte offset on bad magic, bad sizes or truncation.
Snapshot read_snapshot(const std::filesystem::path& path);

void save_field(const std::filesystem::path& path, const LayeredField& field, ValueKind kind = ValueKind::kPv);
LayeredField load_field(const std::filesystem::path& path, const Grid& grid, ValueKind kind = ValueKind::kPv);

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace qgpf

#endif  // QGPF_SNAPSHOT_HPP
