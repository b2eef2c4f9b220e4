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

#ifndef QGPF_TESTS_TEST_SUPPORT_HPP
#define QGPF_TESTS_TEST_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <string>

#include "qgpf/cabaret.hpp"
#include "qgpf/elliptic.hpp"
#include "qgpf/grid.hpp"

namespace qgpf::testing {

// Channel dimensions and couplings of the reference configuration.
inline constexpr double kLx = 3840e3;
inline constexpr double kLy = 1920e3;
inline constexpr double kS1 = 4.22e-3 * 1e-6;
inline constexpr double kS2 = 1.41e-3 * 1e-6;

inline StratificationParams paper_strat() { return {kS1, kS2}; }

inline ModelParams paper_params(double dt) {
  ModelParams p;
  p.beta = 2e-11;
  p.nu = 3.125;
  p.mu = 4e-8;
  p.background_u = {0.06, 0.0};
  p.dt = dt;
  return p;
}

inline ModelParams inviscid_params(double dt) {
  ModelParams p;
  p.dt = dt;
  return p;
}

inline std::shared_ptr<const Model> make_model(const Grid& g, const ModelParams& p,
                                               StratificationParams strat = paper_strat()) {
  return std::make_shared<const Model>(g, p, std::make_shared<const EllipticWorkspace>(g, strat));
}

inline LayeredField random_field(const Grid& g, std::uint64_t seed, double amplitude = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amplitude, amplitude);
  LayeredField f(g);
  for (double& x : f.values()) x = d(rng);
  return f;
}

/// Smooth stream function: a few channel modes with random coefficients, zero on the walls.
inline LayeredField smooth_psi(const Grid& g, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  LayeredField psi(g);
  for (int l = 0; l < kLayers; ++l) {
    for (int m = 0; m <= 3; ++m) {
      for (int n = 1; n <= 3; ++n) {
        const double a = d(rng) * amplitude / (1.0 + m * m + n * n);
        const double ph = std::numbers::pi * d(rng);
        for (int j = 0; j < g.ny(); ++j) {
          for (int i = 0; i < g.nx(); ++i) {
            psi.at(l, i, j) += a * std::sin(std::numbers::pi * n * g.y_center(j) / g.ly()) *
                               std::cos(2.0 * std::numbers::pi * m * g.x_center(i) / g.lx() + ph);
          }
        }
      }
    }
  }
  return psi;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  const double s = std::max(max_abs(a), max_abs(b));
  return s > 0.0 ? max_abs_diff(a, b) / s : 0.0;
}

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("qgpf_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace qgpf::testing

#endif  // QGPF_TESTS_TEST_SUPPORT_HPP
