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

#ifndef QGPF_KERNELS_HPP
#define QGPF_KERNELS_HPP

#include <algorithm>
#include <span>

#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Single-layer stencil kernels of the CABARET step.
 *
 * Every kernel acts on one layer. Spans are sized by the grid: cells for centered data,
 * x_faces()/y_faces() for face data, nodes() for node data. Loops over rows are
 * OpenMP-parallel; results do not depend on the thread count since every output entry
 * is written by exactly one iteration.
 */

namespace qgpf::kernels {

/// 5-point Laplacian with ghost value 2c - f at both walls.
void laplacian(const Grid& g, std::span<const double> f, double wall, std::span<double> out);

/// 5-point Laplacian with per-column wall values (south at y = 0, north at y = Ly).
void laplacian(const Grid& g, std::span<const double> f, std::span<const double> south,
               std::span<const double> north, std::span<double> out);

/// Wall vorticity for psi = c and zero normal derivative on the wall: 8 (psi_0 - c) / dy^2.
void wall_vorticity(const Grid& g, std::span<const double> psi, double wall, std::span<double> south,
                    std::span<double> north);

/// Lap(Lap psi), the outer Laplacian closed with the no-slip wall vorticity.
/// `scratch` must hold cells() + 2 nx values.
void biharmonic(const Grid& g, std::span<const double> psi, double wall, std::span<double> out,
                std::span<double> scratch);

/// Node stream function: average of the four surrounding cells, wall value on wall rows.
void node_values(const Grid& g, std::span<const double> psi, double wall, std::span<double> nodes);

/// u = -(psi_n(i, j+1) - psi_n(i, j)) / dy + background_u on x-faces,
/// v = (psi_n(i+1, j) - psi_n(i, j)) / dx on y-faces.
void face_velocities(const Grid& g, std::span<const double> nodes, double background_u, std::span<double> u,
                     std::span<double> v);

/// out += scale * -(Dx[u qx] + Dy[v qy]).
void add_flux_divergence(const Grid& g, std::span<const double> qx, std::span<const double> qy,
                         std::span<const double> u, std::span<const double> v, double scale, std::span<double> out);

/// out = -(beta / 2) (v(i, j) + v(i, j+1)).
void beta_term(const Grid& g, std::span<const double> v, double beta, std::span<double> out);

/// out = 1.5 a - 0.5 b.
void extrapolate_linear(std::span<const double> a, std::span<const double> b, std::span<double> out);

/// Clamp `candidate` into [min(a,b,c) + tq, max(a,b,c) + tq].
[[nodiscard]] inline double clip_minmax(double candidate, double a, double b, double c, double tq) noexcept {
  const double hi = std::max({a, b, c}) + tq;
  const double lo = std::min({a, b, c}) + tq;
  return std::clamp(candidate, lo, hi);
}

/// Upwind extrapolation of face PV plus limiter.
///
/// q_half and q_n are cell centers, qx_n and qy_n the face values at time n, ax and ay the
/// advecting face velocities at n+1 (including any noise contribution). Wall y-faces are
/// extrapolated from their single neighbouring cell.
void extrapolate_faces(const Grid& g, std::span<const double> q_half, std::span<const double> q_n,
                       std::span<const double> qx_n, std::span<const double> qy_n, std::span<const double> ax,
                       std::span<const double> ay, double dt, std::span<double> qx_new, std::span<double> qy_new);

/// Face values from centers: interior faces average, wall y-faces linear extrapolation.
void center_to_faces(const Grid& g, std::span<const double> q, std::span<double> qx, std::span<double> qy);

/// Cell-center velocity: mean of the two faces bracketing the cell in each direction.
void cell_velocity(const Grid& g, std::span<const double> u, std::span<const double> v, std::span<double> uc,
                   std::span<double> vc);

/// max(|u| dt / dx, |v| dt / dy) over all faces.
[[nodiscard]] double max_courant(const Grid& g, std::span<const double> u, std::span<const double> v, double dt);

}  // namespace qgpf::kernels

#endif  // QGPF_KERNELS_HPP
