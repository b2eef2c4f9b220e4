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

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "qgpf/snapshot.hpp"
#include "test_support.hpp"

namespace {

using qgpf::FormatError;
using qgpf::Grid;
using qgpf::ValueKind;
namespace t = qgpf::testing;

std::vector<unsigned char> bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

TEST(Snapshot, FieldRoundTripIsBitExact) {
  const auto dir = t::temp_dir("snapshot_rt");
  const Grid g(12, 6, 1.0, 0.5);
  const auto f = t::random_field(g, 9, 1e-5);
  qgpf::save_field(dir / "q.bin", f);
  const auto back = qgpf::load_field(dir / "q.bin", g);
  ASSERT_EQ(back.values().size(), f.values().size());
  EXPECT_EQ(0, std::memcmp(back.values().data(), f.values().data(), 8 * f.values().size()));
}

TEST(Snapshot, HeaderLayout) {
  const auto dir = t::temp_dir("snapshot_hdr");
  const Grid g(5, 4, 1.0, 1.0);
  qgpf::save_field(dir / "psi.bin", qgpf::LayeredField(g, 1.0), ValueKind::kStreamFunction);
  const auto b = bytes_of(dir / "psi.bin");
  ASSERT_EQ(b.size(), qgpf::kSnapshotHeaderBytes + 8u * 2 * 20);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "QGF1");
  EXPECT_EQ(b[4], 5);
  EXPECT_EQ(b[8], 4);
  EXPECT_EQ(b[12], 2);
  EXPECT_EQ(b[16], 2);
  EXPECT_EQ(b[20], 1);
  // 1.0 little-endian: 00 .. 00 f0 3f
  EXPECT_EQ(b[32 + 6], 0xf0);
  EXPECT_EQ(b[32 + 7], 0x3f);
}

TEST(Snapshot, PayloadSizes) {
  EXPECT_EQ(qgpf::payload_size({4, 3, 2, ValueKind::kPv, 1}), 24u);
  EXPECT_EQ(qgpf::payload_size({4, 3, 2, ValueKind::kCellVelocity, 2}), 96u);
  EXPECT_EQ(qgpf::payload_size({4, 3, 2, ValueKind::kXiBasis, 3}), 3u * 2 * (12 + 16));
  EXPECT_EQ(qgpf::payload_size({4, 3, 2, ValueKind::kTrajectory, 2}), 2u * (1 + 48));
}

TEST(Snapshot, TruncatedPayloadReportsOffset) {
  const auto dir = t::temp_dir("snapshot_trunc");
  const Grid g(8, 4, 1.0, 1.0);
  qgpf::save_field(dir / "q.bin", t::random_field(g, 1));
  auto b = bytes_of(dir / "q.bin");
  b.resize(b.size() - 3);
  write_bytes(dir / "q.bin", b);
  try {
    (void)qgpf::read_snapshot(dir / "q.bin");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.byte_offset(), b.size());
  }
}

TEST(Snapshot, TruncatedHeader) {
  const auto dir = t::temp_dir("snapshot_hdr_trunc");
  write_bytes(dir / "x.bin", {'Q', 'G', 'F', '1', 1, 0});
  EXPECT_THROW((void)qgpf::read_snapshot(dir / "x.bin"), FormatError);
}

TEST(Snapshot, BadMagicAndTrailingBytes) {
  const auto dir = t::temp_dir("snapshot_bad");
  const Grid g(4, 4, 1.0, 1.0);
  qgpf::save_field(dir / "q.bin", qgpf::LayeredField(g));
  auto b = bytes_of(dir / "q.bin");
  auto bad = b;
  bad[0] = 'X';
  write_bytes(dir / "bad.bin", bad);
  EXPECT_THROW((void)qgpf::read_snapshot(dir / "bad.bin"), FormatError);
  b.push_back(0);
  write_bytes(dir / "long.bin", b);
  EXPECT_THROW((void)qgpf::read_snapshot(dir / "long.bin"), FormatError);
}

TEST(Snapshot, KindAndGridMismatch) {
  const auto dir = t::temp_dir("snapshot_kind");
  const Grid g(8, 4, 1.0, 1.0);
  qgpf::save_field(dir / "q.bin", qgpf::LayeredField(g));
  EXPECT_THROW((void)qgpf::load_field(dir / "q.bin", g, ValueKind::kStreamFunction), FormatError);
  EXPECT_THROW((void)qgpf::load_field(dir / "q.bin", Grid(4, 8, 1.0, 1.0)), FormatError);
}

TEST(Snapshot, MissingFile) {
  EXPECT_THROW((void)qgpf::read_snapshot("/nonexistent/qgpf/none.bin"), FormatError);
}

TEST(Snapshot, PayloadMustMatchHeader) {
  const auto dir = t::temp_dir("snapshot_write");
  std::vector<double> v(5);
  EXPECT_THROW(qgpf::write_snapshot(dir / "x.bin", {2, 2, 2, ValueKind::kPv, 1}, v), qgpf::InvalidArgument);
}

TEST(Snapshot, ChecksumDetectsSingleBitChange) {
  const auto dir = t::temp_dir("snapshot_sum");
  const Grid g(8, 4, 1.0, 1.0);
  auto f = t::random_field(g, 2);
  qgpf::save_field(dir / "a.bin", f);
  qgpf::save_field(dir / "b.bin", f);
  EXPECT_EQ(qgpf::file_checksum(dir / "a.bin"), qgpf::file_checksum(dir / "b.bin"));
  f.values()[7] = std::nextafter(f.values()[7], 2.0);
  qgpf::save_field(dir / "b.bin", f);
  EXPECT_NE(qgpf::file_checksum(dir / "a.bin"), qgpf::file_checksum(dir / "b.bin"));
}

}  // namespace
