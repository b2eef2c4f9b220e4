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

#ifndef QGPF_XI_HPP
#define QGPF_XI_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Transport-noise basis: K divergence-free face fields per layer.
 *
 * Each mode comes from a node stream function zeta (zero on the walls) through the same
 * discrete curl as the model velocity: xi^u = -Dy[zeta] on x-faces, xi^v = Dx[zeta] on
 * y-faces. Units are m s^-1/2 so that xi dW is a displacement.
 */

namespace qgpf {

/// Provenance of a synthesized mode.
struct XiMode {
  int m = 0;              ///< zonal wavenumber
  int n = 0;              ///< meridional half-wavenumber
  bool cosine = false;    ///< cos(2 pi m x / Lx + phase) instead of sin
  double phase = 0.0;
  double amplitude = 0.0; ///< coefficient A of zeta, m^2 s^-1/2
};

class XiBasis {
 public:
  XiBasis() = default;
  /// Validates divergence (normalized, 1e-8) and vanishing wall-normal components.
  XiBasis(const Grid& grid, std::vector<FaceField> modes, std::vector<XiMode> meta = {});

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] int size() const noexcept { return static_cast<int>(modes_.size()); }
  [[nodiscard]] const FaceField& mode(int k) const { return modes_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] const std::vector<XiMode>& metadata() const noexcept { return meta_; }

  /// sum_k w_k xi_k on every face.
  [[nodiscard]] FaceField combine(std::span<const double> w) const;
  void combine(std::span<const double> w, FaceField& out) const;

 private:
  Grid grid_;
  std::vector<FaceField> modes_;
  std::vector<XiMode> meta_;
};

/// max over cells |Dx xi^u + Dy xi^v| * min(dx, dy) / max|xi|; 0 for an all-zero field.
double normalized_divergence(const FaceField& xi);

/// max |xi^v| on the wall rows relative to max|xi|.
double normalized_wall_flux(const FaceField& xi);

/// Face fields from node stream functions zeta[k][layer] (each of size grid.nodes()).
XiBasis xi_from_stream_functions(const Grid& grid, const std::vector<std::vector<std::vector<double>>>& zeta);

/// Largest K synthesize_xi accepts on this grid.
int available_xi_modes(const Grid& grid);

/// K low-wavenumber channel modes, zeta = A sin(pi n y / Ly) trig(2 pi m x / Lx + phase),
/// ordered by m + n, then m, then sin before cos. A is set so that the strongest face
/// value of mode k is `amplitude` (m s^-1/2) times (|k| / |k_1|)^-spectrum. The seed draws
/// the phases. Layer 2 carries the same pattern scaled by `layer2_ratio`.
XiBasis synthesize_xi(const Grid& grid, int k_modes, double spectrum, std::uint64_t seed, double amplitude = 1.0,
                      double layer2_ratio = 1.0 / 3.0);

void save_xi(const std::filesystem::path& path, const XiBasis& xi);
/// Reads a basis written by save_xi for `grid` (the file carries nx and ny, not the lengths).
XiBasis load_xi(const std::filesystem::path& path, const Grid& grid);

}  // namespace qgpf

#endif  // QGPF_XI_HPP
