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

#ifndef QGPF_ELLIPTIC_HPP
#define QGPF_ELLIPTIC_HPP

#include <array>
#include <complex>
#include <memory>
#include <vector>

#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Inversion of the two-layer PV / stream-function relation
 *
 *     q1 = Lap psi1 + s1 (psi2 - psi1),    q2 = Lap psi2 + s2 (psi1 - psi2)
 *
 * on the periodic channel with psi constant on the walls (one constant per layer) and
 * the integral constraint  sum (psi1 - psi2) dA = mass.
 *
 * The layer coupling is diagonalized into a barotropic mode (eigenvalue 0) and a
 * baroclinic mode (eigenvalue -(s1 + s2)). Each mode is solved by a real FFT in x and
 * one tridiagonal elimination in y per zonal wavenumber. The barotropic wall constant is a
 * gauge (it shifts both layers by the same constant) and is fixed by sum psi2 = 0; the
 * baroclinic wall constant is set by the mass constraint through the unit-wall homogeneous
 * solution.
 */

namespace qgpf {

/// Layer couplings in model units (m^-2).
struct StratificationParams {
  double s1 = 0.0;
  double s2 = 0.0;
};

struct EllipticSolution {
  LayeredField psi;
  std::array<double, kLayers> wall{};  ///< psi value on both walls, per layer
};

/// Caller-owned buffers for one inversion; reuse across calls to avoid allocation.
struct EllipticScratch {
  std::vector<double> real;
  std::vector<std::complex<double>> spectral;
  std::vector<double> column;
};

class EllipticWorkspace {
 public:
  EllipticWorkspace(const Grid& grid, StratificationParams strat);
  ~EllipticWorkspace();
  EllipticWorkspace(const EllipticWorkspace&) = delete;
  EllipticWorkspace& operator=(const EllipticWorkspace&) = delete;

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const StratificationParams& strat() const noexcept { return strat_; }

  /// Eigenvalues of the coupling matrix [[-s1, s1], [s2, -s2]]: {0, -(s1 + s2)}.
  [[nodiscard]] std::array<double, 2> mode_eigenvalues() const noexcept { return {0.0, -(strat_.s1 + strat_.s2)}; }

  /// Thomas-algorithm factors of mode `mode`, zonal wavenumber m: c' then 1/pivot, both length ny.
  [[nodiscard]] std::span<const double> factors(int mode, int m) const;

  /// Unit-wall homogeneous baroclinic profile h(y), length ny.
  [[nodiscard]] std::span<const double> baroclinic_wall_profile() const noexcept { return h_bc_; }

  /// q is the PV anomaly (no background gradient). Thread-safe.
  EllipticSolution invert(const LayeredField& q, double mass) const;
  void invert(const LayeredField& q, double mass, EllipticSolution& out, EllipticScratch& scratch) const;

 private:
  void solve_mode(int mode, std::span<const double> rhs, std::span<double> out, EllipticScratch& scratch) const;

  Grid grid_;
  StratificationParams strat_;
  int nk_ = 0;                          // nx/2 + 1 wavenumbers
  std::vector<double> factors_;         // [mode][m][2][ny]
  std::vector<double> h_bc_;
  double h_bc_sum_ = 0.0;
  void* forward_plan_ = nullptr;
  void* backward_plan_ = nullptr;
};

/// Forward operator: PV anomaly of a stream function with the given wall values.
LayeredField pv_from_psi(const LayeredField& psi, const std::array<double, kLayers>& wall,
                         const StratificationParams& strat);

/// sum (psi1 - psi2) dA.
double mass_functional(const LayeredField& psi);

}  // namespace qgpf

#endif  // QGPF_ELLIPTIC_HPP
