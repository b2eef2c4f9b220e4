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

#include "qgpf/elliptic.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "qgpf/kernels.hpp"

namespace qgpf {

namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

EllipticWorkspace::EllipticWorkspace(const Grid& grid, StratificationParams strat)
    : grid_(grid), strat_(strat), nk_(grid.nx() / 2 + 1) {
  if (!(strat.s1 > 0.0) || !(strat.s2 > 0.0)) throw InvalidArgument("stratification parameters must be positive");
  const int nx = grid.nx();
  const int ny = grid.ny();
  const double idy2 = 1.0 / (grid.dy() * grid.dy());
  const auto eig = mode_eigenvalues();

  factors_.assign(static_cast<std::size_t>(2) * nk_ * 2 * ny, 0.0);
  for (int mode = 0; mode < 2; ++mode) {
    for (int m = 0; m < nk_; ++m) {
      const double s = std::sin(std::numbers::pi * m / nx);
      const double kx2 = 4.0 * s * s / (grid.dx() * grid.dx());
      double* cp = factors_.data() + (static_cast<std::size_t>(mode) * nk_ + m) * 2 * ny;
      double* inv = cp + ny;
      double prev_cp = 0.0;
      for (int j = 0; j < ny; ++j) {
        const bool wall_row = (j == 0 || j == ny - 1);
        const double b = (wall_row ? -3.0 : -2.0) * idy2 - kx2 + eig[mode];
        const double a = (j == 0) ? 0.0 : idy2;
        const double c = (j == ny - 1) ? 0.0 : idy2;
        const double denom = b - a * prev_cp;
        if (denom == 0.0 || !std::isfinite(denom)) throw EllipticError("singular tridiagonal system");
        inv[j] = 1.0 / denom;
        cp[j] = c * inv[j];
        prev_cp = cp[j];
      }
    }
  }

  // Unit wall value moves -2/dy^2 to the right-hand side of both wall rows.
  h_bc_.assign(ny, 0.0);
  {
    const double* cp = factors_.data() + (static_cast<std::size_t>(1) * nk_ + 0) * 2 * ny;
    const double* inv = cp + ny;
    std::vector<double> d(ny, 0.0);
    d[0] = -2.0 * idy2;
    d[ny - 1] += -2.0 * idy2;
    double prev = 0.0;
    for (int j = 0; j < ny; ++j) {
      const double a = (j == 0) ? 0.0 : idy2;
      d[j] = (d[j] - a * prev) * inv[j];
      prev = d[j];
    }
    h_bc_[ny - 1] = d[ny - 1];
    for (int j = ny - 2; j >= 0; --j) h_bc_[j] = d[j] - cp[j] * h_bc_[j + 1];
  }
  h_bc_sum_ = 0.0;
  for (double h : h_bc_) h_bc_sum_ += h * nx;
  if (!(std::abs(h_bc_sum_) > 0.0)) throw EllipticError("mass constraint is singular: zero homogeneous integral");

  std::vector<double> in(grid.cells());
  std::vector<std::complex<double>> out(static_cast<std::size_t>(ny) * nk_);
  int n[] = {nx};
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_many_dft_r2c(1, n, ny, in.data(), nullptr, 1, nx,
                                         reinterpret_cast<fftw_complex*>(out.data()), nullptr, 1, nk_,
                                         FFTW_ESTIMATE | FFTW_UNALIGNED);
  backward_plan_ = fftw_plan_many_dft_c2r(1, n, ny, reinterpret_cast<fftw_complex*>(out.data()), nullptr, 1, nk_,
                                          in.data(), nullptr, 1, nx, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (forward_plan_ == nullptr || backward_plan_ == nullptr) throw EllipticError("FFT planning failed");
}

EllipticWorkspace::~EllipticWorkspace() {
  std::lock_guard lock(planner_mutex());
  if (forward_plan_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  if (backward_plan_ != nullptr) fftw_destroy_plan(static_cast<fftw_plan>(backward_plan_));
}

std::span<const double> EllipticWorkspace::factors(int mode, int m) const {
  if (mode < 0 || mode > 1 || m < 0 || m >= nk_) throw InvalidArgument("no such elliptic mode");
  return {factors_.data() + (static_cast<std::size_t>(mode) * nk_ + m) * 2 * grid_.ny(),
          static_cast<std::size_t>(2 * grid_.ny())};
}

void EllipticWorkspace::solve_mode(int mode, std::span<const double> rhs, std::span<double> out,
                                   EllipticScratch& scratch) const {
  const int nx = grid_.nx();
  const int ny = grid_.ny();
  const double idy2 = 1.0 / (grid_.dy() * grid_.dy());
  auto* spec = scratch.spectral.data();
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(rhs.data()),
                       reinterpret_cast<fftw_complex*>(spec));

  double* re = scratch.column.data();
  double* im = re + ny;
  for (int m = 0; m < nk_; ++m) {
    const double* cp = factors_.data() + (static_cast<std::size_t>(mode) * nk_ + m) * 2 * ny;
    const double* inv = cp + ny;
    double pr = 0.0;
    double pi = 0.0;
    for (int j = 0; j < ny; ++j) {
      const double a = (j == 0) ? 0.0 : idy2;
      const auto& z = spec[static_cast<std::size_t>(j) * nk_ + m];
      pr = (z.real() - a * pr) * inv[j];
      pi = (z.imag() - a * pi) * inv[j];
      re[j] = pr;
      im[j] = pi;
    }
    for (int j = ny - 2; j >= 0; --j) {
      re[j] -= cp[j] * re[j + 1];
      im[j] -= cp[j] * im[j + 1];
    }
    for (int j = 0; j < ny; ++j) spec[static_cast<std::size_t>(j) * nk_ + m] = {re[j], im[j]};
  }
  fftw_execute_dft_c2r(static_cast<fftw_plan>(backward_plan_), reinterpret_cast<fftw_complex*>(spec), out.data());
  const double scale = 1.0 / nx;
  for (double& v : out) v *= scale;
}

EllipticSolution EllipticWorkspace::invert(const LayeredField& q, double mass) const {
  EllipticSolution sol{LayeredField(grid_), {}};
  EllipticScratch scratch;
  invert(q, mass, sol, scratch);
  return sol;
}

void EllipticWorkspace::invert(const LayeredField& q, double mass, EllipticSolution& out,
                               EllipticScratch& scratch) const {
  if (q.grid() != grid_) throw InvalidArgument("PV field does not match the elliptic workspace grid");
  const std::size_t n = grid_.cells();
  const int ny = grid_.ny();
  const int nx = grid_.nx();
  scratch.real.resize(4 * n);
  scratch.spectral.resize(static_cast<std::size_t>(ny) * nk_);
  scratch.column.resize(2 * static_cast<std::size_t>(ny));
  if (out.psi.grid() != grid_) out.psi = LayeredField(grid_);

  const double s1 = strat_.s1;
  const double s2 = strat_.s2;
  const double st = s1 + s2;
  std::span<double> rhs_bt(scratch.real.data(), n);
  std::span<double> rhs_bc(scratch.real.data() + n, n);
  std::span<double> psi_bt(scratch.real.data() + 2 * n, n);
  std::span<double> psi_bc(scratch.real.data() + 3 * n, n);
  const auto q1 = q.layer(0);
  const auto q2 = q.layer(1);
  for (std::size_t c = 0; c < n; ++c) {
    rhs_bt[c] = (s2 * q1[c] + s1 * q2[c]) / st;
    rhs_bc[c] = q1[c] - q2[c];
  }
  solve_mode(0, rhs_bt, psi_bt, scratch);
  solve_mode(1, rhs_bc, psi_bc, scratch);

  double sum_bc = 0.0;
  for (double v : psi_bc) sum_bc += v;
  const double c_bc = (mass / grid_.cell_area() - sum_bc) / h_bc_sum_;
  for (int j = 0; j < ny; ++j) {
    const double add = c_bc * h_bc_[j];
    for (int i = 0; i < nx; ++i) psi_bc[static_cast<std::size_t>(j) * nx + i] += add;
  }
  sum_bc = 0.0;
  double sum_bt = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    sum_bc += psi_bc[c];
    sum_bt += psi_bt[c];
  }
  const double c_bt = (s2 / st * sum_bc - sum_bt) / static_cast<double>(n);

  auto p1 = out.psi.layer(0);
  auto p2 = out.psi.layer(1);
  for (std::size_t c = 0; c < n; ++c) {
    const double bt = psi_bt[c] + c_bt;
    p1[c] = bt + s1 / st * psi_bc[c];
    p2[c] = bt - s2 / st * psi_bc[c];
  }
  out.wall = {c_bt + s1 / st * c_bc, c_bt - s2 / st * c_bc};
  if (!out.psi.all_finite()) throw EllipticError("non-finite stream function");
}

LayeredField pv_from_psi(const LayeredField& psi, const std::array<double, kLayers>& wall,
                         const StratificationParams& strat) {
  const Grid& g = psi.grid();
  LayeredField q(g);
  for (int l = 0; l < kLayers; ++l) kernels::laplacian(g, psi.layer(l), wall[l], q.layer(l));
  auto q1 = q.layer(0);
  auto q2 = q.layer(1);
  const auto p1 = psi.layer(0);
  const auto p2 = psi.layer(1);
  for (std::size_t c = 0; c < g.cells(); ++c) {
    q1[c] += strat.s1 * (p2[c] - p1[c]);
    q2[c] += strat.s2 * (p1[c] - p2[c]);
  }
  return q;
}

double mass_functional(const LayeredField& psi) {
  double sum = 0.0;
  const auto p1 = psi.layer(0);
  const auto p2 = psi.layer(1);
  for (std::size_t c = 0; c < p1.size(); ++c) sum += p1[c] - p2[c];
  return sum * psi.grid().cell_area();
}

}  // namespace qgpf
