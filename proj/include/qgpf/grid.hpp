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

#ifndef QGPF_GRID_HPP
#define QGPF_GRID_HPP

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qgpf/errors.hpp"

/**
 * \file
 * \brief Channel grid, CABARET staggered storage and grid-to-grid operators.
 *
 * Index conventions (all arrays row-major, x fastest, layer outermost):
 *  - cell (i, j), i in [0, nx), j in [0, ny): center at ((i+1/2)dx, (j+1/2)dy).
 *  - x-face (i, j), i in [0, nx), j in [0, ny): at (i dx, (j+1/2)dy), left face of cell (i, j).
 *    Periodic: face nx is face 0.
 *  - y-face (i, j), i in [0, nx), j in [0, ny]: at ((i+1/2)dx, j dy), bottom face of cell (i, j).
 *    Rows j = 0 and j = ny lie on the walls.
 *  - node (i, j), i in [0, nx), j in [0, ny]: at (i dx, j dy).
 */

namespace qgpf {

inline constexpr int kLayers = 2;

/// Horizontally periodic channel of nx by ny cells.
class Grid {
 public:
  Grid() = default;
  Grid(int nx, int ny, double lx, double ly);

  [[nodiscard]] int nx() const noexcept { return nx_; }
  [[nodiscard]] int ny() const noexcept { return ny_; }
  [[nodiscard]] double lx() const noexcept { return lx_; }
  [[nodiscard]] double ly() const noexcept { return ly_; }
  [[nodiscard]] double dx() const noexcept { return dx_; }
  [[nodiscard]] double dy() const noexcept { return dy_; }
  [[nodiscard]] double cell_area() const noexcept { return dx_ * dy_; }

  [[nodiscard]] std::size_t cells() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }
  [[nodiscard]] std::size_t x_faces() const noexcept { return cells(); }
  [[nodiscard]] std::size_t y_faces() const noexcept { return static_cast<std::size_t>(nx_) * (ny_ + 1); }
  [[nodiscard]] std::size_t nodes() const noexcept { return y_faces(); }

  [[nodiscard]] int wrap(int i) const noexcept { return ((i % nx_) + nx_) % nx_; }
  [[nodiscard]] std::size_t cell(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * nx_ + wrap(i);
  }
  [[nodiscard]] std::size_t xface(int i, int j) const noexcept { return cell(i, j); }
  [[nodiscard]] std::size_t yface(int i, int j) const noexcept { return cell(i, j); }
  [[nodiscard]] std::size_t node(int i, int j) const noexcept { return cell(i, j); }

  [[nodiscard]] double x_center(int i) const noexcept { return (i + 0.5) * dx_; }
  [[nodiscard]] double y_center(int j) const noexcept { return (j + 0.5) * dy_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int nx_ = 0;
  int ny_ = 0;
  double lx_ = 0.0;
  double ly_ = 0.0;
  double dx_ = 0.0;
  double dy_ = 0.0;
};

/// A scalar per cell center for each of the two layers.
class LayeredField {
 public:
  LayeredField() = default;
  explicit LayeredField(const Grid& grid, double fill = 0.0);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::span<double> layer(int l) noexcept {
    return {data_.data() + l * grid_.cells(), grid_.cells()};
  }
  [[nodiscard]] std::span<const double> layer(int l) const noexcept {
    return {data_.data() + l * grid_.cells(), grid_.cells()};
  }
  [[nodiscard]] double& at(int l, int i, int j) noexcept { return data_[l * grid_.cells() + grid_.cell(i, j)]; }
  [[nodiscard]] double at(int l, int i, int j) const noexcept {
    return data_[l * grid_.cells() + grid_.cell(i, j)];
  }
  [[nodiscard]] std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

  [[nodiscard]] bool all_finite() const noexcept;

 private:
  Grid grid_;
  std::vector<double> data_;
};

/// Per-layer x-face and y-face values (q, u or v on the CABARET faces).
class FaceField {
 public:
  FaceField() = default;
  explicit FaceField(const Grid& grid, double fill = 0.0);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::span<double> xf(int l) noexcept { return {x_.data() + l * grid_.x_faces(), grid_.x_faces()}; }
  [[nodiscard]] std::span<const double> xf(int l) const noexcept {
    return {x_.data() + l * grid_.x_faces(), grid_.x_faces()};
  }
  [[nodiscard]] std::span<double> yf(int l) noexcept { return {y_.data() + l * grid_.y_faces(), grid_.y_faces()}; }
  [[nodiscard]] std::span<const double> yf(int l) const noexcept {
    return {y_.data() + l * grid_.y_faces(), grid_.y_faces()};
  }
  [[nodiscard]] std::span<double> x_values() noexcept { return x_; }
  [[nodiscard]] std::span<const double> x_values() const noexcept { return x_; }
  [[nodiscard]] std::span<double> y_values() noexcept { return y_; }
  [[nodiscard]] std::span<const double> y_values() const noexcept { return y_; }

  [[nodiscard]] bool all_finite() const noexcept;

 private:
  Grid grid_;
  std::vector<double> x_;
  std::vector<double> y_;
};

/// Cell-centered velocity of both layers.
struct CellVelocity {
  LayeredField u;
  LayeredField v;
};

struct StationReading {
  double u = 0.0;
  double v = 0.0;
};

struct Station {
  int i = 0;
  int j = 0;
  double x = 0.0;
  double y = 0.0;
};

class StationSet {
 public:
  StationSet() = default;
  StationSet(const Grid& grid, std::vector<Station> stations, std::string layout);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::size_t size() const noexcept { return stations_.size(); }
  [[nodiscard]] const Station& operator[](std::size_t k) const noexcept { return stations_[k]; }
  [[nodiscard]] const std::vector<Station>& stations() const noexcept { return stations_; }
  [[nodiscard]] const std::string& layout() const noexcept { return layout_; }

 private:
  Grid grid_;
  std::vector<Station> stations_;
  std::string layout_;
};

/// Stations at the interior nodes of a uniform rows x cols lattice, snapped to the containing cell.
StationSet make_equidistant_stations(const Grid& grid, int rows, int cols);

/// Block mean of `fine` onto `coarse_grid`; grid dimensions must divide.
LayeredField coarse_grain(const LayeredField& fine, const Grid& coarse_grid);

/// Inverse of coarse_grain for piecewise-constant data.
LayeredField constant_refine(const LayeredField& coarse, const Grid& fine_grid);

/// Layer-1 velocity at each station's cell. No observation noise.
std::vector<StationReading> sample_at_stations(const CellVelocity& velocity, const StationSet& stations);

/// Domain integral of one layer (sum of values times cell area).
double integrate(const LayeredField& field, int layer);

}  // namespace qgpf

#endif  // QGPF_GRID_HPP
