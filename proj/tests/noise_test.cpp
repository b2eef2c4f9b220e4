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

#include <cmath>
#include <numeric>

#include "qgpf/errors.hpp"
#include "qgpf/noise.hpp"

namespace {

using qgpf::Channel;
using qgpf::NoiseStream;

TEST(Philox, KnownAnswerVectors) {
  // Published Philox4x32-10 test vectors.
  const auto z = qgpf::philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(z[0], 0x6627e8d5u);
  EXPECT_EQ(z[1], 0xe169c58du);
  EXPECT_EQ(z[2], 0xbc57ac4cu);
  EXPECT_EQ(z[3], 0x9b00dbd8u);
  const auto f = qgpf::philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(f[0], 0x408f276du);
  EXPECT_EQ(f[1], 0x41c83b0eu);
  EXPECT_EQ(f[2], 0xa20bc7c6u);
  EXPECT_EQ(f[3], 0x6d5451fdu);
  const auto p = qgpf::philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
  EXPECT_EQ(p[0], 0xd16cfe09u);
  EXPECT_EQ(p[1], 0x94fdccebu);
  EXPECT_EQ(p[2], 0x5001e420u);
  EXPECT_EQ(p[3], 0x24126ea1u);
}

TEST(NoiseStream, DeterministicAndKeyed) {
  const NoiseStream a(42, 3);
  const NoiseStream b(42, 3);
  const NoiseStream c(42, 4);
  const NoiseStream d(43, 3);
  std::vector<double> xa(8), xb(8), xc(8), xd(8);
  a.normals(Channel::kDynamics, 17, 0, xa);
  b.normals(Channel::kDynamics, 17, 0, xb);
  c.normals(Channel::kDynamics, 17, 0, xc);
  d.normals(Channel::kDynamics, 17, 0, xd);
  EXPECT_EQ(xa, xb);
  EXPECT_NE(xa, xc);
  EXPECT_NE(xa, xd);
  std::vector<double> other(8);
  a.normals(Channel::kJitter, 17, 0, other);
  EXPECT_NE(xa, other);
  a.normals(Channel::kDynamics, 17, 1, other);
  EXPECT_NE(xa, other);
  std::vector<double> xk(8);
  a.child(3).normals(Channel::kDynamics, 17, 0, xk);
  EXPECT_NE(xa, xk);
}

TEST(NoiseStream, UniformRange) {
  const NoiseStream s(1, 0);
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(Channel::kResample, i);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(NoiseStream, NormalMoments) {
  const NoiseStream s(7, 1);
  const int n = 200000;
  std::vector<double> x(n);
  s.normals(Channel::kDynamics, 0, 0, x);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  // Tolerances are about five standard errors.
  EXPECT_NEAR(mean, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
  EXPECT_NEAR(m3, 0.0, 5.0 * std::sqrt(15.0 / n));
  EXPECT_NEAR(m4, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(NoiseStream, IncrementsScaleWithSqrtDt) {
  const NoiseStream s(3, 2);
  std::vector<double> a(5), b(5);
  s.increments(10, 1.0, a);
  s.increments(10, 4.0, b);
  for (int k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(b[k], 2.0 * a[k]);
}

TEST(NoiseStream, IncrementsAreIndependentAcrossSteps) {
  const NoiseStream s(5, 0);
  const int n = 50000;
  double cross = 0.0;
  std::vector<double> a(1), b(1);
  for (int i = 0; i < n; ++i) {
    s.increments(2 * i, 1.0, a);
    s.increments(2 * i + 1, 1.0, b);
    cross += a[0] * b[0];
  }
  EXPECT_NEAR(cross / n, 0.0, 5.0 / std::sqrt(n));
}

TEST(BridgeRefine, SumsToCoarseIncrement) {
  const NoiseStream s(9, 0);
  const int k = 3;
  std::vector<double> coarse(4 * k);
  for (int n = 0; n < 4; ++n) s.increments(n, 2.0, std::span<double>(coarse).subspan(n * k, k));
  const auto fine = qgpf::bridge_refine(coarse, k, 2.0, s, 0);
  ASSERT_EQ(fine.size(), 8u * k);
  for (int n = 0; n < 4; ++n) {
    for (int m = 0; m < k; ++m) {
      EXPECT_NEAR(fine[(2 * n) * k + m] + fine[(2 * n + 1) * k + m], coarse[n * k + m], 1e-14);
    }
  }
}

TEST(BridgeRefine, HalvesHaveHalfTheVariance) {
  const NoiseStream s(10, 0);
  const int n = 40000;
  std::vector<double> coarse(n);
  s.increments(0, 1.0, coarse);  // one step of n modes
  const auto fine = qgpf::bridge_refine(coarse, n, 1.0, s, 0);
  double v1 = 0.0, v2 = 0.0, c = 0.0;
  for (int m = 0; m < n; ++m) {
    v1 += fine[m] * fine[m];
    v2 += fine[n + m] * fine[n + m];
    c += fine[m] * fine[n + m];
  }
  EXPECT_NEAR(v1 / n, 0.5, 5 * std::sqrt(2.0 / n) * 0.5);
  EXPECT_NEAR(v2 / n, 0.5, 5 * std::sqrt(2.0 / n) * 0.5);
  EXPECT_NEAR(c / n, 0.0, 5 * 0.5 / std::sqrt(n));
}

TEST(BridgeRefine, RejectsBadShape) {
  const NoiseStream s(1, 0);
  std::vector<double> coarse(5);
  EXPECT_THROW((void)qgpf::bridge_refine(coarse, 2, 1.0, s, 0), qgpf::InvalidArgument);
}

}  // namespace
