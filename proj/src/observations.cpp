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

#include "qgpf/observations.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

namespace qgpf {

namespace {

// Two-pass population std; the one-pass formula loses everything for nearly constant cells.
double population_std(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::max(kSigmaFloor, std::sqrt(ss / static_cast<double>(x.size())));
}

void check_stations(const std::vector<StationReading>& r, const ObservationRecord& obs) {
  if (r.size() != obs.values.size()) {
    throw InvalidArgument("particle projection has " + std::to_string(r.size()) + " stations, observation has " +
                          std::to_string(obs.values.size()));
  }
}

}  // namespace

void ObservationRecord::validate() const {
  const std::size_t m = stations.size();
  if (values.size() != m || sigma.u.size() != m || sigma.v.size() != m) {
    throw InvalidArgument("observation record dimensions do not match the station set");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(values[i].u) || !std::isfinite(values[i].v)) {
      throw InvalidArgument("non-finite observation at station " + std::to_string(i));
    }
    if (!(sigma.u[i] > 0.0) || !(sigma.v[i] > 0.0) || !std::isfinite(sigma.u[i]) || !std::isfinite(sigma.v[i])) {
      throw InvalidArgument("non-positive sigma at station " + std::to_string(i));
    }
  }
}

StationSigma compute_sigma(const CellVelocity& fine_velocity, const Grid& coarse_grid, const StationSet& stations) {
  const Grid& f = fine_velocity.u.grid();
  if (f.nx() % coarse_grid.nx() != 0 || f.ny() % coarse_grid.ny() != 0) {
    throw InvalidArgument("fine grid is not an integer refinement of the coarse grid");
  }
  if (stations.grid().nx() != coarse_grid.nx() || stations.grid().ny() != coarse_grid.ny()) {
    throw InvalidArgument("stations do not belong to the coarse grid");
  }
  const int rx = f.nx() / coarse_grid.nx();
  const int ry = f.ny() / coarse_grid.ny();
  StationSigma out;
  std::vector<double> us;
  std::vector<double> vs;
  for (const auto& s : stations.stations()) {
    us.clear();
    vs.clear();
    for (int j = s.j * ry; j < (s.j + 1) * ry; ++j) {
      for (int i = s.i * rx; i < (s.i + 1) * rx; ++i) {
        us.push_back(fine_velocity.u.at(0, i, j));
        vs.push_back(fine_velocity.v.at(0, i, j));
      }
    }
    out.u.push_back(population_std(us));
    out.v.push_back(population_std(vs));
  }
  return out;
}

StationSigma temporal_sigma(const std::vector<std::vector<StationReading>>& series) {
  if (series.empty()) throw InvalidArgument("temporal sigma needs at least one sample");
  const std::size_t m = series.front().size();
  StationSigma out;
  std::vector<double> us(series.size());
  std::vector<double> vs(series.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < series.size(); ++t) {
      if (series[t].size() != m) throw InvalidArgument("station count changes within the series");
      us[t] = series[t][i].u;
      vs[t] = series[t][i].v;
    }
    out.u.push_back(population_std(us));
    out.v.push_back(population_std(vs));
  }
  return out;
}

ObservationRecord observe_truth(const std::vector<StationReading>& truth, const StationSet& stations,
                                const StationSigma& sigma, const NoiseStream& stream, std::uint64_t cycle, double time,
                                std::string provenance) {
  ObservationRecord rec;
  rec.time = time;
  rec.stations = stations;
  rec.sigma = sigma;
  rec.provenance = std::move(provenance);
  std::vector<double> eta(2 * truth.size());
  stream.normals(Channel::kObservation, cycle, 0, eta);
  rec.values.resize(truth.size());
  for (std::size_t i = 0; i < truth.size() && i < sigma.u.size() && i < sigma.v.size(); ++i) {
    rec.values[i] = {truth[i].u + sigma.u[i] * eta[2 * i], truth[i].v + sigma.v[i] * eta[2 * i + 1]};
  }
  rec.validate();
  return rec;
}

ObservationRecord observe_truth(const CellVelocity& truth, const StationSet& stations, const StationSigma& sigma,
                                const NoiseStream& stream, std::uint64_t cycle, double time, std::string provenance) {
  return observe_truth(sample_at_stations(truth, stations), stations, sigma, stream, cycle, time,
                       std::move(provenance));
}

double log_likelihood_weight(const std::vector<StationReading>& projected, const ObservationRecord& obs) {
  check_stations(projected, obs);
  double s = 0.0;
  for (std::size_t i = 0; i < projected.size(); ++i) {
    const double du = (projected[i].u - obs.values[i].u) / obs.sigma.u[i];
    const double dv = (projected[i].v - obs.values[i].v) / obs.sigma.v[i];
    s += du * du + dv * dv;
  }
  return -0.5 * s;
}

double log_likelihood_weight(const CellVelocity& velocity, const ObservationRecord& obs) {
  return log_likelihood_weight(sample_at_stations(velocity, obs.stations), obs);
}

double girsanov_penalty(std::span<const double> lambda, std::span<const double> dw, double dt) {
  if (lambda.size() != dw.size()) throw InvalidArgument("lambda and dW have different lengths");
  double s = 0.0;
  for (std::size_t k = 0; k < lambda.size(); ++k) s += lambda[k] * lambda[k] * dt / 2.0 - lambda[k] * dw[k];
  return s;
}

double log_girsanov_weight(const std::vector<StationReading>& projected, const ObservationRecord& obs,
                           std::span<const double> lambda, std::span<const double> dw, double dt) {
  const double pen = girsanov_penalty(lambda, dw, dt);
  return log_likelihood_weight(projected, obs) - pen;
}

double ess(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw InvalidArgument("weights must be finite and nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw InvalidArgument("all weights are zero");
  double sq = 0.0;
  for (double w : weights) sq += (w / sum) * (w / sum);
  return 1.0 / sq;
}

WeightReport weigh(std::span<const double> log_weights, double scale) {
  if (log_weights.empty()) throw InvalidArgument("no weights");
  WeightReport r;
  r.log_weights.assign(log_weights.begin(), log_weights.end());
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (std::isnan(lw)) throw InvalidArgument("NaN log-weight");
    mx = std::max(mx, scale * lw);
  }
  if (!std::isfinite(mx)) throw InvalidArgument("no particle has a finite log-weight");
  r.normalized.resize(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    r.normalized[i] = std::exp(scale * log_weights[i] - mx);
    sum += r.normalized[i];
  }
  for (double& w : r.normalized) w /= sum;
  r.ess = std::clamp(ess(r.normalized), 1.0, static_cast<double>(log_weights.size()));
  return r;
}

void write_observations_csv(const std::filesystem::path& path, const std::vector<ObservationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  if (!records.empty()) out << "# sigma: " << records.front().provenance << '\n';
  out << "time_s,station_id,x_m,y_m,u_obs,v_obs,sigma_u,sigma_v\n";
  char line[512];
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      const auto& s = r.stations[i];
      std::snprintf(line, sizeof line, "%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.time, i, s.x, s.y,
                    r.values[i].u, r.values[i].v, r.sigma.u[i], r.sigma.v[i]);
      out << line;
    }
  }
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

std::vector<ObservationRecord> read_observations_csv(const std::filesystem::path& path, const Grid& grid) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string(), 0);
  std::string provenance = "csv";
  std::string line;
  std::size_t offset = 0;
  bool header = false;
  // Rows grouped by time in file order.
  std::vector<std::pair<double, std::vector<std::array<double, 7>>>> groups;
  while (std::getline(in, line)) {
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# sigma: ";
      if (line.rfind(tag, 0) == 0) provenance = line.substr(tag.size());
      continue;
    }
    if (!header) {
      if (line != "time_s,station_id,x_m,y_m,u_obs,v_obs,sigma_u,sigma_v") {
        throw FormatError("unexpected observation CSV header", here);
      }
      header = true;
      continue;
    }
    std::array<double, 8> v{};
    std::stringstream ss(line);
    std::string cell;
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= 8) throw FormatError("too many columns", here);
      std::size_t used = 0;
      try {
        v[n] = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw FormatError("bad number '" + cell + "'", here);
      }
      if (used != cell.size()) throw FormatError("bad number '" + cell + "'", here);
      ++n;
    }
    if (n != 8) throw FormatError("expected 8 columns", here);
    if (groups.empty() || groups.back().first != v[0]) groups.push_back({v[0], {}});
    auto& rows = groups.back().second;
    if (static_cast<std::size_t>(v[1]) != rows.size()) throw FormatError("station ids out of order", here);
    rows.push_back({v[2], v[3], v[4], v[5], v[6], v[7], 0.0});
  }
  if (!header) throw FormatError("missing observation CSV header", offset);
  std::vector<ObservationRecord> out;
  for (const auto& [t, rows] : groups) {
    std::vector<Station> st;
    ObservationRecord rec;
    rec.time = t;
    rec.provenance = provenance;
    for (const auto& r : rows) {
      const int i = std::clamp(static_cast<int>(std::floor(r[0] / grid.dx())), 0, grid.nx() - 1);
      const int j = std::clamp(static_cast<int>(std::floor(r[1] / grid.dy())), 0, grid.ny() - 1);
      st.push_back({i, j, r[0], r[1]});
      rec.values.push_back({r[2], r[3]});
      rec.sigma.u.push_back(r[4]);
      rec.sigma.v.push_back(r[5]);
    }
    rec.stations = StationSet(grid, std::move(st), "csv");
    rec.validate();
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace qgpf
