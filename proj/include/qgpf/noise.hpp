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

#ifndef QGPF_NOISE_HPP
#define QGPF_NOISE_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

/**
 * \file
 * \brief Counter-based random streams (Philox4x32-10).
 *
 * A draw is a pure function of (seed, stream id, channel, index, serial, slot), so
 * results never depend on call order or on which thread asks.
 */

namespace qgpf {

/// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key) noexcept;

/// What a draw is used for; distinct channels never share counters.
enum class Channel : std::uint32_t {
  kDynamics = 0,     ///< Brownian increments of the model
  kJitter = 1,       ///< fresh increments of MCMC proposals
  kAccept = 2,       ///< Metropolis-Hastings uniforms
  kObservation = 3,  ///< observation noise
  kRank = 4,         ///< rank-histogram tie breaking and member selection
  kResample = 5,     ///< systematic resampling offsets
  kBridge = 6,       ///< Brownian bridge refinement
  kInitial = 7,      ///< initial-condition perturbations
};

class NoiseStream {
 public:
  NoiseStream() = default;
  NoiseStream(std::uint64_t seed, std::uint64_t stream_id);

  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Uniform on [0, 1) with 53 random bits.
  [[nodiscard]] double uniform(Channel ch, std::uint64_t index, std::uint32_t serial = 0, std::uint32_t slot = 0) const noexcept;

  /// Standard normals into `out` (Box-Muller on consecutive uniform pairs).
  void normals(Channel ch, std::uint64_t index, std::uint32_t serial, std::span<double> out) const noexcept;

  /// K Brownian increments ~ N(0, dt) for model step `step`.
  void increments(std::uint64_t step, double dt, std::span<double> out, Channel ch = Channel::kDynamics,
                  std::uint32_t serial = 0) const noexcept;

  /// A derived stream with an independent key.
  [[nodiscard]] NoiseStream child(std::uint64_t id) const noexcept;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::array<std::uint32_t, 2> key_{};
};

/// SplitMix64 finalizer; used to derive keys and sub-seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Brownian-bridge halving: each increment dW over h becomes dW/2 + sqrt(h)/2 Z, dW/2 - sqrt(h)/2 Z.
///
/// `coarse` holds steps x K increments (step-major). `level` tags the refinement so that
/// successive refinements draw independent Z.
std::vector<double> bridge_refine(std::span<const double> coarse, int k_modes, double h, const NoiseStream& stream,
                                  std::uint32_t level);

}  // namespace qgpf

#endif  // QGPF_NOISE_HPP
