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

#include "qgpf/noise.hpp"

#include <cmath>
#include <numbers>

#include "qgpf/errors.hpp"

namespace qgpf {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53;
constexpr std::uint32_t kMul1 = 0xCD9E8D57;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

double to_unit(std::uint32_t a, std::uint32_t b) noexcept {
  const std::uint64_t bits = (static_cast<std::uint64_t>(a >> 5) << 26) | (b >> 6);
  return static_cast<double>(bits) * 0x1.0p-53;
}

std::array<std::uint32_t, 4> make_counter(Channel ch, std::uint64_t index, std::uint32_t serial,
                                          std::uint32_t slot) noexcept {
  return {static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), slot,
          (static_cast<std::uint32_t>(ch) << 24) ^ serial};
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
  const std::uint64_t k = splitmix64(splitmix64(seed) ^ (stream_id * 0xD1B54A32D192ED03ULL + 1));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

NoiseStream NoiseStream::child(std::uint64_t id) const noexcept {
  return NoiseStream(splitmix64(seed_ ^ 0xA0761D6478BD642FULL) + stream_id_, id);
}

double NoiseStream::uniform(Channel ch, std::uint64_t index, std::uint32_t serial, std::uint32_t slot) const noexcept {
  const auto r = philox4x32(make_counter(ch, index, serial, slot), key_);
  return to_unit(r[0], r[1]);
}

void NoiseStream::normals(Channel ch, std::uint64_t index, std::uint32_t serial, std::span<double> out) const noexcept {
  const std::size_t n = out.size();
  for (std::size_t p = 0; 2 * p < n; ++p) {
    const auto r = philox4x32(make_counter(ch, index, serial, static_cast<std::uint32_t>(p)), key_);
    // 1 - u keeps the logarithm finite.
    const double u1 = 1.0 - to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    out[2 * p] = rad * std::cos(ang);
    if (2 * p + 1 < n) out[2 * p + 1] = rad * std::sin(ang);
  }
}

void NoiseStream::increments(std::uint64_t step, double dt, std::span<double> out, Channel ch,
                             std::uint32_t serial) const noexcept {
  normals(ch, step, serial, out);
  const double s = std::sqrt(dt);
  for (double& x : out) x *= s;
}

std::vector<double> bridge_refine(std::span<const double> coarse, int k_modes, double h, const NoiseStream& stream,
                                  std::uint32_t level) {
  if (k_modes < 1 || coarse.size() % static_cast<std::size_t>(k_modes) != 0) {
    throw InvalidArgument("increment array is not steps x K");
  }
  if (!(h > 0.0)) throw InvalidArgument("bridge step must be positive");
  const std::size_t k = static_cast<std::size_t>(k_modes);
  const std::size_t steps = coarse.size() / k;
  std::vector<double> fine(2 * coarse.size());
  std::vector<double> z(k);
  const double s = 0.5 * std::sqrt(h);
  for (std::size_t n = 0; n < steps; ++n) {
    stream.normals(Channel::kBridge, n, level, z);
    for (std::size_t m = 0; m < k; ++m) {
      const double half = 0.5 * coarse[n * k + m];
      fine[(2 * n) * k + m] = half + s * z[m];
      fine[(2 * n + 1) * k + m] = half - s * z[m];
    }
  }
  return fine;
}

}  // namespace qgpf
