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

#include "qgpf/grid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

namespace qgpf {

CflError::CflError(double courant, double limit, long step, int particle)
    : NumericalError([&] {
        std::ostringstream os;
        os << "CFL violation: Courant number " << courant << " exceeds " << limit << " at step " << step;
        if (particle >= 0) os << " (particle " << particle << ")";
        return os.str();
      }()),
      courant_(courant),
      particle_(particle) {}

FormatError::FormatError(const std::string& what, std::size_t byte_offset)
    : std::runtime_error(what + " (byte offset " + std::to_string(byte_offset) + ")"), offset_(byte_offset) {}

Grid::Grid(int nx, int ny, double lx, double ly) : nx_(nx), ny_(ny), lx_(lx), ly_(ly) {
  if (nx < 4 || ny < 4) throw InvalidArgument("grid needs nx >= 4 and ny >= 4");
  if (!(lx > 0.0) || !(ly > 0.0)) throw InvalidArgument("grid lengths must be positive");
  dx_ = lx / nx;
  dy_ = ly / ny;
}

LayeredField::LayeredField(const Grid& grid, double fill) : grid_(grid), data_(kLayers * grid.cells(), fill) {}

bool LayeredField::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

FaceField::FaceField(const Grid& grid, double fill)
    : grid_(grid), x_(kLayers * grid.x_faces(), fill), y_(kLayers * grid.y_faces(), fill) {}

bool FaceField::all_finite() const noexcept {
  auto finite = [](double x) { return std::isfinite(x); };
  return std::all_of(x_.begin(), x_.end(), finite) && std::all_of(y_.begin(), y_.end(), finite);
}

StationSet::StationSet(const Grid& grid, std::vector<Station> stations, std::string layout)
    : grid_(grid), stations_(std::move(stations)), layout_(std::move(layout)) {
  std::set<std::pair<int, int>> seen;
  for (const auto& s : stations_) {
    if (s.i < 0 || s.i >= grid.nx() || s.j < 0 || s.j >= grid.ny()) {
      throw InvalidArgument("station outside grid");
    }
    if (!seen.emplace(s.i, s.j).second) throw InvalidArgument("duplicate station location");
  }
}

StationSet make_equidistant_stations(const Grid& grid, int rows, int cols) {
  if (rows < 1 || cols < 1) throw InvalidArgument("station lattice needs rows, cols >= 1");
  if (rows > grid.ny() || cols > grid.nx()) throw InvalidArgument("station lattice exceeds the grid");
  std::vector<Station> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int l = 0; l < rows; ++l) {
    const int j = std::clamp(static_cast<int>(std::floor((l + 1.0) * grid.ny() / (rows + 1))), 0, grid.ny() - 1);
    for (int k = 0; k < cols; ++k) {
      const int i = std::clamp(static_cast<int>(std::floor((k + 1.0) * grid.nx() / (cols + 1))), 0, grid.nx() - 1);
      out.push_back({i, j, grid.x_center(i), grid.y_center(j)});
    }
  }
  return StationSet(grid, std::move(out), std::to_string(rows) + "x" + std::to_string(cols));
}

namespace {

std::pair<int, int> ratio(const Grid& fine, const Grid& coarse) {
  if (fine.nx() % coarse.nx() != 0 || fine.ny() % coarse.ny() != 0) {
    throw InvalidArgument("fine grid is not an integer multiple of the coarse grid");
  }
  if (std::abs(fine.lx() - coarse.lx()) > 1e-9 * fine.lx() || std::abs(fine.ly() - coarse.ly()) > 1e-9 * fine.ly()) {
    throw InvalidArgument("grids cover different domains");
  }
  return {fine.nx() / coarse.nx(), fine.ny() / coarse.ny()};
}

}  // namespace

LayeredField coarse_grain(const LayeredField& fine, const Grid& coarse_grid) {
  const Grid& fg = fine.grid();
  const auto [rx, ry] = ratio(fg, coarse_grid);
  LayeredField out(coarse_grid);
  const double inv = 1.0 / (rx * ry);
  for (int l = 0; l < kLayers; ++l) {
    for (int J = 0; J < coarse_grid.ny(); ++J) {
      for (int I = 0; I < coarse_grid.nx(); ++I) {
        double sum = 0.0;
        for (int b = 0; b < ry; ++b) {
          for (int a = 0; a < rx; ++a) sum += fine.at(l, I * rx + a, J * ry + b);
        }
        out.at(l, I, J) = sum * inv;
      }
    }
  }
  return out;
}

LayeredField constant_refine(const LayeredField& coarse, const Grid& fine_grid) {
  const auto [rx, ry] = ratio(fine_grid, coarse.grid());
  LayeredField out(fine_grid);
  for (int l = 0; l < kLayers; ++l) {
    for (int j = 0; j < fine_grid.ny(); ++j) {
      for (int i = 0; i < fine_grid.nx(); ++i) out.at(l, i, j) = coarse.at(l, i / rx, j / ry);
    }
  }
  return out;
}

std::vector<StationReading> sample_at_stations(const CellVelocity& velocity, const StationSet& stations) {
  const Grid& g = velocity.u.grid();
  if (g.nx() != stations.grid().nx() || g.ny() != stations.grid().ny()) {
    throw InvalidArgument("station set belongs to a different grid");
  }
  std::vector<StationReading> out;
  out.reserve(stations.size());
  for (const auto& s : stations.stations()) {
    if (s.i < 0 || s.i >= g.nx() || s.j < 0 || s.j >= g.ny()) throw InvalidArgument("station outside grid");
    out.push_back({velocity.u.at(0, s.i, s.j), velocity.v.at(0, s.i, s.j)});
  }
  return out;
}

double integrate(const LayeredField& field, int layer) {
  double sum = 0.0;
  for (double x : field.layer(layer)) sum += x;
  return sum * field.grid().cell_area();
}

}  // namespace qgpf
