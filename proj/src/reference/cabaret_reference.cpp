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

#include "reference/cabaret_reference.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace qgpf::reference {

namespace {

using Vec = std::vector<double>;

struct Index {
  int nx, ny;
  int w(int i) const { return ((i % nx) + nx) % nx; }
  std::size_t c(int l, int i, int j) const {
    return static_cast<std::size_t>(l) * nx * ny + static_cast<std::size_t>(j) * nx + w(i);
  }
  std::size_t y(int l, int i, int j) const {
    return static_cast<std::size_t>(l) * nx * (ny + 1) + static_cast<std::size_t>(j) * nx + w(i);
  }
};

Vec copy(std::span<const double> s) { return Vec(s.begin(), s.end()); }

// -(Dx[u qx] + Dy[v qy]).
Vec flux(const Grid& g, const Index& ix, const Vec& qx, const Vec& qy, const Vec& u, const Vec& v) {
  Vec f(kLayers * g.cells());
  for (int l = 0; l < kLayers; ++l)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const double fx = u[ix.c(l, i + 1, j)] * qx[ix.c(l, i + 1, j)] - u[ix.c(l, i, j)] * qx[ix.c(l, i, j)];
        const double fy = v[ix.y(l, i, j + 1)] * qy[ix.y(l, i, j + 1)] - v[ix.y(l, i, j)] * qy[ix.y(l, i, j)];
        f[ix.c(l, i, j)] = -(fx / g.dx() + fy / g.dy());
      }
  return f;
}

Vec beta_r(const Grid& g, const Index& ix, const Vec& v, double beta) {
  Vec r(kLayers * g.cells());
  for (int l = 0; l < kLayers; ++l)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) r[ix.c(l, i, j)] = -0.5 * beta * (v[ix.y(l, i, j)] + v[ix.y(l, i, j + 1)]);
  return r;
}

// Laplacian of one layer with per-column wall values.
double lap_at(const Grid& g, const Index& ix, const Vec& f, int l, int i, int j, const Vec& south, const Vec& north) {
  const double c = f[ix.c(l, i, j)];
  const double b = (j == 0) ? 2.0 * south[ix.w(i)] - c : f[ix.c(l, i, j - 1)];
  const double a = (j == g.ny() - 1) ? 2.0 * north[ix.w(i)] - c : f[ix.c(l, i, j + 1)];
  return (f[ix.c(l, i - 1, j)] - 2.0 * c + f[ix.c(l, i + 1, j)]) / (g.dx() * g.dx()) +
         (b - 2.0 * c + a) / (g.dy() * g.dy());
}

void face_velocity(const Model& m, const Index& ix, const LayeredField& psi, const std::array<double, kLayers>& wall,
                   Vec& u, Vec& v) {
  const Grid& g = m.grid();
  u.assign(kLayers * g.x_faces(), 0.0);
  v.assign(kLayers * g.y_faces(), 0.0);
  for (int l = 0; l < kLayers; ++l) {
    auto node = [&](int i, int j) {
      if (j == 0 || j == g.ny()) return wall[l];
      return 0.25 * (psi.at(l, i - 1, j - 1) + psi.at(l, i, j - 1) + psi.at(l, i - 1, j) + psi.at(l, i, j));
    };
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        u[ix.c(l, i, j)] = -(node(i, j + 1) - node(i, j)) / g.dy() + m.params().background_u[l];
    for (int j = 0; j <= g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) v[ix.y(l, i, j)] = (node(i + 1, j) - node(i, j)) / g.dx();
  }
}

struct Predicted {
  Vec q_tmp;
  Vec q_half;
  EllipticSolution sol;
  Vec r_now;
};

Predicted predict(const Model& m, const ModelState& s, const XiBasis* xi, std::span<const double> dw) {
  const Grid& g = m.grid();
  const Index ix{g.nx(), g.ny()};
  const auto& p = m.params();
  const double dt = p.dt;
  const std::size_t n = kLayers * g.cells();
  const Vec q = copy(s.q.values());
  const Vec qx = copy(s.q_faces.x_values()), qy = copy(s.q_faces.y_values());
  const Vec u = copy(s.velocity.x_values()), v = copy(s.velocity.y_values());

  Predicted out;
  out.r_now = beta_r(g, ix, v, p.beta);
  const Vec f = flux(g, ix, qx, qy, u, v);
  out.q_tmp.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    out.q_tmp[c] = q[c] + 0.5 * dt * f[c] + dt * (1.5 * out.r_now[c] - 0.5 * s.beta_prev.values()[c]);
  }
  if (xi != nullptr) {
    for (int k = 0; k < xi->size(); ++k) {
      const Vec xu = copy(xi->mode(k).x_values()), xv = copy(xi->mode(k).y_values());
      const Vec gk = flux(g, ix, qx, qy, xu, xv);
      const Vec rk = beta_r(g, ix, xv, p.beta);
      const double cb = p.noise_beta_current - p.noise_beta_previous;
      for (std::size_t c = 0; c < n; ++c) out.q_tmp[c] += (gk[c] + cb * rk[c]) * dw[k] / 2.0;
    }
  }

  LayeredField anom(g);
  for (std::size_t c = 0; c < n; ++c) anom.values()[c] = out.q_tmp[c] - m.background_pv().values()[c];
  out.sol = m.elliptic().invert(anom, s.mass);

  const Vec psi = copy(out.sol.psi.values());
  out.q_half = out.q_tmp;
  for (int l = 0; l < kLayers; ++l) {
    const Vec wall_c(g.nx(), out.sol.wall[l]);
    Vec zeta(kLayers * g.cells(), 0.0);
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) zeta[ix.c(l, i, j)] = lap_at(g, ix, psi, l, i, j, wall_c, wall_c);
    Vec zs(g.nx()), zn(g.nx());
    for (int i = 0; i < g.nx(); ++i) {
      zs[i] = 8.0 * (psi[ix.c(l, i, 0)] - out.sol.wall[l]) / (g.dy() * g.dy());
      zn[i] = 8.0 * (psi[ix.c(l, i, g.ny() - 1)] - out.sol.wall[l]) / (g.dy() * g.dy());
    }
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        double visc = p.nu * lap_at(g, ix, zeta, l, i, j, zs, zn);
        if (l == 1) visc -= p.mu * zeta[ix.c(l, i, j)];
        if (p.nu != 0.0 || p.mu != 0.0) out.q_half[ix.c(l, i, j)] += dt * visc;
      }
  }
  return out;
}

double clip(double cand, double a, double b, double c, double tq) {
  const double hi = std::max(a, std::max(b, c)) + tq;
  const double lo = std::min(a, std::min(b, c)) + tq;
  if (cand > hi) return hi;
  if (cand < lo) return lo;
  return cand;
}

}  // namespace

LayeredField predictor(const Model& model, const ModelState& s, const XiBasis* xi, std::span<const double> dw) {
  LayeredField out(model.grid());
  const Predicted pr = predict(model, s, xi, dw);
  std::copy(pr.q_half.begin(), pr.q_half.end(), out.values().begin());
  return out;
}

void step(const Model& m, ModelState& s, const XiBasis* xi, std::span<const double> dw,
          std::span<const double> lambda) {
  const Grid& g = m.grid();
  const Index ix{g.nx(), g.ny()};
  const auto& p = m.params();
  const double dt = p.dt;
  const int nx = g.nx(), ny = g.ny();
  const std::size_t n = kLayers * g.cells();

  Predicted pr = predict(m, s, xi, dw);
  Vec uh, vh;
  face_velocity(m, ix, pr.sol.psi, pr.sol.wall, uh, vh);

  // Extrapolated and advecting velocities.
  Vec un(uh.size()), vn(vh.size());
  for (std::size_t f = 0; f < un.size(); ++f) un[f] = 1.5 * uh[f] - 0.5 * s.velocity_half_prev.x_values()[f];
  for (std::size_t f = 0; f < vn.size(); ++f) vn[f] = 1.5 * vh[f] - 0.5 * s.velocity_half_prev.y_values()[f];
  Vec au = un, av = vn;
  if (xi != nullptr) {
    for (int k = 0; k < xi->size(); ++k) {
      for (std::size_t f = 0; f < au.size(); ++f) au[f] += xi->mode(k).x_values()[f] * dw[k] / dt;
      for (std::size_t f = 0; f < av.size(); ++f) av[f] += xi->mode(k).y_values()[f] * dw[k] / dt;
    }
  }
  double courant = 0.0;
  for (double x : au) courant = std::max(courant, std::abs(x) * dt / g.dx());
  for (double x : av) courant = std::max(courant, std::abs(x) * dt / g.dy());
  if (!(courant <= p.max_courant)) throw CflError(courant, p.max_courant, s.step);

  const Vec& qh = pr.q_half;
  const Vec q0 = copy(s.q.values());
  const Vec qx0 = copy(s.q_faces.x_values()), qy0 = copy(s.q_faces.y_values());
  auto tq_x = [&](int l, int i, int j) {
    const double src = (qh[ix.c(l, i, j)] - q0[ix.c(l, i, j)]) / (dt / 2.0) +
                       0.5 * (au[ix.c(l, i + 1, j)] + au[ix.c(l, i, j)]) *
                           (qx0[ix.c(l, i + 1, j)] - qx0[ix.c(l, i, j)]) / g.dx();
    return dt * src;
  };
  auto tq_y = [&](int l, int i, int j) {
    const double src = (qh[ix.c(l, i, j)] - q0[ix.c(l, i, j)]) / (dt / 2.0) +
                       0.5 * (av[ix.y(l, i, j + 1)] + av[ix.y(l, i, j)]) *
                           (qy0[ix.y(l, i, j + 1)] - qy0[ix.y(l, i, j)]) / g.dy();
    return dt * src;
  };
  Vec qx1(qx0.size()), qy1(qy0.size());
  for (int l = 0; l < kLayers; ++l) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (au[ix.c(l, i, j)] >= 0.0) {
          const double cand = 2.0 * qh[ix.c(l, i - 1, j)] - qx0[ix.c(l, i - 1, j)];
          qx1[ix.c(l, i, j)] = clip(cand, qx0[ix.c(l, i - 1, j)], q0[ix.c(l, i - 1, j)], qx0[ix.c(l, i, j)],
                                    tq_x(l, i - 1, j));
        } else {
          const double cand = 2.0 * qh[ix.c(l, i, j)] - qx0[ix.c(l, i + 1, j)];
          qx1[ix.c(l, i, j)] =
              clip(cand, qx0[ix.c(l, i, j)], q0[ix.c(l, i, j)], qx0[ix.c(l, i + 1, j)], tq_x(l, i, j));
        }
      }
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i < nx; ++i) {
        bool below;
        if (j == 0) below = false;
        else if (j == ny) below = true;
        else below = av[ix.y(l, i, j)] >= 0.0;
        if (below) {
          const double cand = 2.0 * qh[ix.c(l, i, j - 1)] - qy0[ix.y(l, i, j - 1)];
          qy1[ix.y(l, i, j)] = clip(cand, qy0[ix.y(l, i, j - 1)], q0[ix.c(l, i, j - 1)], qy0[ix.y(l, i, j)],
                                    tq_y(l, i, j - 1));
        } else {
          const double cand = 2.0 * qh[ix.c(l, i, j)] - qy0[ix.y(l, i, j + 1)];
          qy1[ix.y(l, i, j)] =
              clip(cand, qy0[ix.y(l, i, j)], q0[ix.c(l, i, j)], qy0[ix.y(l, i, j + 1)], tq_y(l, i, j));
        }
      }
  }

  // Corrector.
  const Vec f1 = flux(g, ix, qx1, qy1, un, vn);
  Vec q1(n);
  for (std::size_t c = 0; c < n; ++c) q1[c] = qh[c] + 0.5 * dt * f1[c];
  if (xi != nullptr) {
    for (int k = 0; k < xi->size(); ++k) {
      const Vec xu = copy(xi->mode(k).x_values()), xv = copy(xi->mode(k).y_values());
      const Vec gk = flux(g, ix, qx1, qy1, xu, xv);
      const Vec rk = beta_r(g, ix, xv, p.beta);
      const double cb = p.noise_beta_current - p.noise_beta_previous;
      const double w = dw[k] + (lambda.empty() ? 0.0 : lambda[k] * dt);
      for (std::size_t c = 0; c < n; ++c) q1[c] += (gk[c] + cb * rk[c]) * w / 2.0;
    }
  }

  std::copy(q1.begin(), q1.end(), s.q.values().begin());
  std::copy(qx1.begin(), qx1.end(), s.q_faces.x_values().begin());
  std::copy(qy1.begin(), qy1.end(), s.q_faces.y_values().begin());
  std::copy(un.begin(), un.end(), s.velocity.x_values().begin());
  std::copy(vn.begin(), vn.end(), s.velocity.y_values().begin());
  std::copy(uh.begin(), uh.end(), s.velocity_half_prev.x_values().begin());
  std::copy(vh.begin(), vh.end(), s.velocity_half_prev.y_values().begin());
  std::copy(pr.r_now.begin(), pr.r_now.end(), s.beta_prev.values().begin());
  s.psi = pr.sol.psi;
  s.wall = pr.sol.wall;
  s.time += dt;
  ++s.step;
}

}  // namespace qgpf::reference
