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

#include "qgpf/xi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "qgpf/kernels.hpp"
#include "qgpf/noise.hpp"
#include "qgpf/snapshot.hpp"

namespace qgpf {

namespace {

constexpr double kDivergenceTolerance = 1e-8;

double max_abs(const FaceField& f) {
  double m = 0.0;
  for (double x : f.x_values()) m = std::max(m, std::abs(x));
  for (double x : f.y_values()) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

double normalized_divergence(const FaceField& xi) {
  const Grid& g = xi.grid();
  const double scale = max_abs(xi);
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (int l = 0; l < kLayers; ++l) {
    const auto u = xi.xf(l);
    const auto v = xi.yf(l);
    for (int j = 0; j < g.ny(); ++j) {
      for (int i = 0; i < g.nx(); ++i) {
        const double div = (u[g.xface(i + 1, j)] - u[g.xface(i, j)]) / g.dx() +
                           (v[g.yface(i, j + 1)] - v[g.yface(i, j)]) / g.dy();
        worst = std::max(worst, std::abs(div));
      }
    }
  }
  return worst * std::min(g.dx(), g.dy()) / scale;
}

double normalized_wall_flux(const FaceField& xi) {
  const Grid& g = xi.grid();
  const double scale = max_abs(xi);
  if (scale == 0.0) return 0.0;
  double worst = 0.0;
  for (int l = 0; l < kLayers; ++l) {
    const auto v = xi.yf(l);
    for (int i = 0; i < g.nx(); ++i) {
      worst = std::max({worst, std::abs(v[g.yface(i, 0)]), std::abs(v[g.yface(i, g.ny())])});
    }
  }
  return worst / scale;
}

XiBasis::XiBasis(const Grid& grid, std::vector<FaceField> modes, std::vector<XiMode> meta)
    : grid_(grid), modes_(std::move(modes)), meta_(std::move(meta)) {
  if (!meta_.empty() && meta_.size() != modes_.size()) throw InvalidArgument("xi metadata size mismatch");
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    const FaceField& f = modes_[k];
    if (f.grid() != grid_) throw InvalidArgument("xi mode on a different grid");
    if (!f.all_finite()) throw InvalidArgument("xi mode " + std::to_string(k) + " is not finite");
    const double div = normalized_divergence(f);
    if (!(div <= kDivergenceTolerance)) {
      std::ostringstream os;
      os << "xi mode " << k << " fails the divergence check: normalized divergence " << div;
      throw InvalidArgument(os.str());
    }
    const double wall = normalized_wall_flux(f);
    if (!(wall <= kDivergenceTolerance)) {
      std::ostringstream os;
      os << "xi mode " << k << " has a wall-normal component " << wall;
      throw InvalidArgument(os.str());
    }
  }
}

void XiBasis::combine(std::span<const double> w, FaceField& out) const {
  if (w.size() != modes_.size()) throw InvalidArgument("weight count does not match the number of xi modes");
  if (out.grid() != grid_) out = FaceField(grid_);
  auto ox = out.x_values();
  auto oy = out.y_values();
  std::fill(ox.begin(), ox.end(), 0.0);
  std::fill(oy.begin(), oy.end(), 0.0);
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    const double c = w[k];
    if (c == 0.0) continue;
    const auto mx = modes_[k].x_values();
    const auto my = modes_[k].y_values();
    for (std::size_t f = 0; f < ox.size(); ++f) ox[f] += c * mx[f];
    for (std::size_t f = 0; f < oy.size(); ++f) oy[f] += c * my[f];
  }
}

FaceField XiBasis::combine(std::span<const double> w) const {
  FaceField out(grid_);
  combine(w, out);
  return out;
}

XiBasis xi_from_stream_functions(const Grid& grid, const std::vector<std::vector<std::vector<double>>>& zeta) {
  std::vector<FaceField> modes;
  modes.reserve(zeta.size());
  for (const auto& per_layer : zeta) {
    if (per_layer.size() != kLayers) throw InvalidArgument("need one stream function per layer");
    FaceField f(grid);
    for (int l = 0; l < kLayers; ++l) {
      if (per_layer[l].size() != grid.nodes()) throw InvalidArgument("node stream function has the wrong size");
      kernels::face_velocities(grid, per_layer[l], 0.0, f.xf(l), f.yf(l));
    }
    modes.push_back(std::move(f));
  }
  return XiBasis(grid, std::move(modes));
}

int available_xi_modes(const Grid& grid) { return 2 * (grid.nx() / 4) * (grid.ny() / 4); }

XiBasis synthesize_xi(const Grid& grid, int k_modes, double spectrum, std::uint64_t seed, double amplitude,
                      double layer2_ratio) {
  if (k_modes < 1) throw InvalidArgument("need at least one xi mode");
  if (k_modes > available_xi_modes(grid)) {
    throw InvalidArgument("requested " + std::to_string(k_modes) + " xi modes but the grid supports only " +
                          std::to_string(available_xi_modes(grid)));
  }
  if (!std::isfinite(spectrum) || !std::isfinite(amplitude) || !std::isfinite(layer2_ratio)) {
    throw InvalidArgument("non-finite xi parameter");
  }

  std::vector<std::tuple<int, int, int>> order;  // (m + n, m, cos) with n recovered
  for (int m = 1; m <= grid.nx() / 4; ++m) {
    for (int n = 1; n <= grid.ny() / 4; ++n) {
      order.emplace_back(m + n, m, 0);
      order.emplace_back(m + n, m, 1);
    }
  }
  std::sort(order.begin(), order.end());

  const NoiseStream stream(seed, 0);
  const double k1 = std::sqrt(2.0);
  std::vector<std::vector<std::vector<double>>> zeta;
  std::vector<XiMode> meta;
  for (int k = 0; k < k_modes; ++k) {
    const auto [sum, m, cosine] = order[static_cast<std::size_t>(k)];
    const int n = sum - m;
    XiMode md;
    md.m = m;
    md.n = n;
    md.cosine = cosine != 0;
    // One phase per (m, n) keeps the sin / cos pair orthogonal.
    md.phase = 2.0 * std::numbers::pi *
               stream.uniform(Channel::kInitial, static_cast<std::uint64_t>(m) * 4096 + static_cast<std::uint64_t>(n));
    std::vector<double> z(grid.nodes(), 0.0);
    for (int j = 1; j < grid.ny(); ++j) {
      const double sy = std::sin(std::numbers::pi * n * j * grid.dy() / grid.ly());
      for (int i = 0; i < grid.nx(); ++i) {
        const double arg = 2.0 * std::numbers::pi * m * i * grid.dx() / grid.lx() + md.phase;
        z[grid.node(i, j)] = sy * (md.cosine ? std::cos(arg) : std::sin(arg));
      }
    }
    // Scale so the strongest face value hits the target.
    FaceField probe(grid);
    kernels::face_velocities(grid, z, 0.0, probe.xf(0), probe.yf(0));
    double peak = 0.0;
    for (double x : probe.xf(0)) peak = std::max(peak, std::abs(x));
    for (double x : probe.yf(0)) peak = std::max(peak, std::abs(x));
    const double target = amplitude * std::pow(std::hypot(m, n) / k1, -spectrum);
    const double a = (peak > 0.0) ? target / peak : 0.0;
    md.amplitude = a;
    std::vector<double> z2(z.size());
    for (std::size_t p = 0; p < z.size(); ++p) {
      z[p] *= a;
      z2[p] = layer2_ratio * z[p];
    }
    zeta.push_back({std::move(z), std::move(z2)});
    meta.push_back(md);
  }
  XiBasis base = xi_from_stream_functions(grid, zeta);
  std::vector<FaceField> modes;
  for (int k = 0; k < base.size(); ++k) modes.push_back(base.mode(k));
  return XiBasis(grid, std::move(modes), std::move(meta));
}

void save_xi(const std::filesystem::path& path, const XiBasis& xi) {
  const Grid& g = xi.grid();
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(xi.size()) * kLayers * (g.x_faces() + g.y_faces()));
  for (int k = 0; k < xi.size(); ++k) {
    for (int l = 0; l < kLayers; ++l) {
      const auto x = xi.mode(k).xf(l);
      const auto y = xi.mode(k).yf(l);
      v.insert(v.end(), x.begin(), x.end());
      v.insert(v.end(), y.begin(), y.end());
    }
  }
  write_snapshot(path, {g.nx(), g.ny(), kLayers, ValueKind::kXiBasis, xi.size()}, v);
}

XiBasis load_xi(const std::filesystem::path& path, const Grid& grid) {
  const Snapshot s = read_snapshot(path);
  if (s.header.kind != ValueKind::kXiBasis) throw FormatError("not a xi basis: " + path.string(), 16);
  if (s.header.nx != grid.nx() || s.header.ny != grid.ny()) throw FormatError("xi basis grid mismatch", 4);
  if (s.header.records < 1) throw FormatError("xi basis has no modes", 20);
  std::vector<FaceField> modes;
  std::size_t pos = 0;
  for (int k = 0; k < s.header.records; ++k) {
    FaceField f(grid);
    for (int l = 0; l < kLayers; ++l) {
      auto x = f.xf(l);
      auto y = f.yf(l);
      std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(pos), x.size(), x.begin());
      pos += x.size();
      std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(pos), y.size(), y.begin());
      pos += y.size();
    }
    modes.push_back(std::move(f));
  }
  return XiBasis(grid, std::move(modes));
}

}  // namespace qgpf
