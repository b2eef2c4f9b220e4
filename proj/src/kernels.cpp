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

#include "qgpf/kernels.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace qgpf::kernels {

namespace {

// Below this many cells the fork/join cost dominates.
constexpr std::size_t kParallelMin = 4096;

}  // namespace

void laplacian(const Grid& g, std::span<const double> f, std::span<const double> south,
               std::span<const double> north, std::span<double> out) {
  const int nx = g.nx();
  const int ny = g.ny();
  const double idx2 = 1.0 / (g.dx() * g.dx());
  const double idy2 = 1.0 / (g.dy() * g.dy());
#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 0; j < ny; ++j) {
    const double* row = f.data() + static_cast<std::size_t>(j) * nx;
    const double* below = (j > 0) ? row - nx : nullptr;
    const double* above = (j < ny - 1) ? row + nx : nullptr;
    double* o = out.data() + static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const int il = (i == 0) ? nx - 1 : i - 1;
      const int ir = (i == nx - 1) ? 0 : i + 1;
      const double c = row[i];
      const double b = below ? below[i] : 2.0 * south[i] - c;
      const double a = above ? above[i] : 2.0 * north[i] - c;
      o[i] = (row[il] - 2.0 * c + row[ir]) * idx2 + (b - 2.0 * c + a) * idy2;
    }
  }
}

void laplacian(const Grid& g, std::span<const double> f, double wall, std::span<double> out) {
  const std::vector<double> w(static_cast<std::size_t>(g.nx()), wall);
  laplacian(g, f, w, w, out);
}

void wall_vorticity(const Grid& g, std::span<const double> psi, double wall, std::span<double> south,
                    std::span<double> north) {
  const int nx = g.nx();
  const double k = 8.0 / (g.dy() * g.dy());
  const double* top = psi.data() + static_cast<std::size_t>(g.ny() - 1) * nx;
  for (int i = 0; i < nx; ++i) {
    south[i] = k * (psi[i] - wall);
    north[i] = k * (top[i] - wall);
  }
}

void biharmonic(const Grid& g, std::span<const double> psi, double wall, std::span<double> out,
                std::span<double> scratch) {
  const std::size_t n = g.cells();
  const auto nx = static_cast<std::size_t>(g.nx());
  auto zeta = scratch.subspan(0, n);
  auto south = scratch.subspan(n, nx);
  auto north = scratch.subspan(n + nx, nx);
  laplacian(g, psi, wall, zeta);
  wall_vorticity(g, psi, wall, south, north);
  laplacian(g, zeta, south, north, out);
}

void node_values(const Grid& g, std::span<const double> psi, double wall, std::span<double> nodes) {
  const int nx = g.nx();
  const int ny = g.ny();
  for (int i = 0; i < nx; ++i) {
    nodes[i] = wall;
    nodes[static_cast<std::size_t>(ny) * nx + i] = wall;
  }
#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 1; j < ny; ++j) {
    const double* lo = psi.data() + static_cast<std::size_t>(j - 1) * nx;
    const double* hi = lo + nx;
    double* o = nodes.data() + static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const int il = (i == 0) ? nx - 1 : i - 1;
      o[i] = 0.25 * (lo[il] + lo[i] + hi[il] + hi[i]);
    }
  }
}

void face_velocities(const Grid& g, std::span<const double> nodes, double background_u, std::span<double> u,
                     std::span<double> v) {
  const int nx = g.nx();
  const int ny = g.ny();
  const double idx = 1.0 / g.dx();
  const double idy = 1.0 / g.dy();
#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 0; j <= ny; ++j) {
    const double* row = nodes.data() + static_cast<std::size_t>(j) * nx;
    double* vo = v.data() + static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const int ir = (i == nx - 1) ? 0 : i + 1;
      vo[i] = (row[ir] - row[i]) * idx;
    }
    if (j < ny) {
      const double* up = row + nx;
      double* uo = u.data() + static_cast<std::size_t>(j) * nx;
      for (int i = 0; i < nx; ++i) uo[i] = -(up[i] - row[i]) * idy + background_u;
    }
  }
}

void add_flux_divergence(const Grid& g, std::span<const double> qx, std::span<const double> qy,
                         std::span<const double> u, std::span<const double> v, double scale, std::span<double> out) {
  const int nx = g.nx();
  const int ny = g.ny();
  const double sx = scale / g.dx();
  const double sy = scale / g.dy();
#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 0; j < ny; ++j) {
    const std::size_t r = static_cast<std::size_t>(j) * nx;
    const double* qxr = qx.data() + r;
    const double* ur = u.data() + r;
    const double* qb = qy.data() + r;
    const double* qt = qb + nx;
    const double* vb = v.data() + r;
    const double* vt = vb + nx;
    double* o = out.data() + r;
    for (int i = 0; i < nx; ++i) {
      const int ir = (i == nx - 1) ? 0 : i + 1;
      const double fx = ur[ir] * qxr[ir] - ur[i] * qxr[i];
      const double fy = vt[i] * qt[i] - vb[i] * qb[i];
      o[i] -= sx * fx + sy * fy;
    }
  }
}

void beta_term(const Grid& g, std::span<const double> v, double beta, std::span<double> out) {
  const std::size_t n = g.cells();
  const auto nx = static_cast<std::size_t>(g.nx());
  const double h = -0.5 * beta;
  for (std::size_t c = 0; c < n; ++c) out[c] = h * (v[c] + v[c + nx]);
}

void extrapolate_linear(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const std::size_t n = out.size();
  for (std::size_t k = 0; k < n; ++k) out[k] = 1.5 * a[k] - 0.5 * b[k];
}

void extrapolate_faces(const Grid& g, std::span<const double> q_half, std::span<const double> q_n,
                       std::span<const double> qx_n, std::span<const double> qy_n, std::span<const double> ax,
                       std::span<const double> ay, double dt, std::span<double> qx_new, std::span<double> qy_new) {
  const int nx = g.nx();
  const int ny = g.ny();
  const double idx = 1.0 / g.dx();
  const double idy = 1.0 / g.dy();
  const double i_half = 2.0 / dt;

  // dt * Q for the cell c in the x or y sweep.
  auto tq_x = [&](std::size_t row, int i) {
    const int ir = (i == nx - 1) ? 0 : i + 1;
    const std::size_t c = row + i;
    const double q_src = (q_half[c] - q_n[c]) * i_half +
                         0.5 * (ax[row + ir] + ax[c]) * (qx_n[row + ir] - qx_n[c]) * idx;
    return dt * q_src;
  };
  auto tq_y = [&](int i, int j) {
    const std::size_t c = static_cast<std::size_t>(j) * nx + i;
    const double q_src = (q_half[c] - q_n[c]) * i_half + 0.5 * (ay[c + nx] + ay[c]) * (qy_n[c + nx] - qy_n[c]) * idy;
    return dt * q_src;
  };

#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 0; j < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const std::size_t f = row + i;
      if (ax[f] >= 0.0) {
        const int cu = (i == 0) ? nx - 1 : i - 1;  // upwind cell; its left face is face cu
        const std::size_t c = row + cu;
        const double cand = 2.0 * q_half[c] - qx_n[row + cu];
        qx_new[f] = clip_minmax(cand, qx_n[row + cu], q_n[c], qx_n[f], tq_x(row, cu));
      } else {
        const int ir = (i == nx - 1) ? 0 : i + 1;
        const double cand = 2.0 * q_half[f] - qx_n[row + ir];
        qx_new[f] = clip_minmax(cand, qx_n[f], q_n[f], qx_n[row + ir], tq_x(row, i));
      }
    }
  }

#pragma omp parallel for if (g.cells() > kParallelMin) schedule(static)
  for (int j = 0; j <= ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const std::size_t f = row + i;
      // Wall rows have a single neighbouring cell; interior rows pick it by the sign of ay.
      const bool from_below = (j == ny) || (j > 0 && ay[f] >= 0.0);
      if (from_below) {
        const std::size_t c = f - nx;
        const double cand = 2.0 * q_half[c] - qy_n[f - nx];
        qy_new[f] = clip_minmax(cand, qy_n[f - nx], q_n[c], qy_n[f], tq_y(i, j - 1));
      } else {
        const std::size_t c = f;
        const double cand = 2.0 * q_half[c] - qy_n[f + nx];
        qy_new[f] = clip_minmax(cand, qy_n[f], q_n[c], qy_n[f + nx], tq_y(i, j));
      }
    }
  }
}

void center_to_faces(const Grid& g, std::span<const double> q, std::span<double> qx, std::span<double> qy) {
  const int nx = g.nx();
  const int ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const int il = (i == 0) ? nx - 1 : i - 1;
      qx[row + i] = 0.5 * (q[row + il] + q[row + i]);
    }
  }
  for (int i = 0; i < nx; ++i) {
    qy[i] = 1.5 * q[i] - 0.5 * q[static_cast<std::size_t>(nx) + i];
    const std::size_t top = static_cast<std::size_t>(ny - 1) * nx + i;
    qy[static_cast<std::size_t>(ny) * nx + i] = 1.5 * q[top] - 0.5 * q[top - nx];
    for (int j = 1; j < ny; ++j) {
      const std::size_t c = static_cast<std::size_t>(j) * nx + i;
      qy[c] = 0.5 * (q[c - nx] + q[c]);
    }
  }
}

void cell_velocity(const Grid& g, std::span<const double> u, std::span<const double> v, std::span<double> uc,
                   std::span<double> vc) {
  const int nx = g.nx();
  const int ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * nx;
    for (int i = 0; i < nx; ++i) {
      const int ir = (i == nx - 1) ? 0 : i + 1;
      uc[row + i] = 0.5 * (u[row + i] + u[row + ir]);
      vc[row + i] = 0.5 * (v[row + i] + v[row + nx + i]);
    }
  }
}

double max_courant(const Grid& g, std::span<const double> u, std::span<const double> v, double dt) {
  double mu = 0.0;
  double mv = 0.0;
  bool nan = false;
  for (double x : u) {
    nan = nan || std::isnan(x);
    mu = std::max(mu, std::abs(x));
  }
  for (double x : v) {
    nan = nan || std::isnan(x);
    mv = std::max(mv, std::abs(x));
  }
  if (nan) return std::numeric_limits<double>::quiet_NaN();
  return std::max(mu * dt / g.dx(), mv * dt / g.dy());
}

}  // namespace qgpf::kernels
