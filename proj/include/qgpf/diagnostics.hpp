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

#ifndef QGPF_DIAGNOSTICS_HPP
#define QGPF_DIAGNOSTICS_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qgpf/cabaret.hpp"
#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Verification metrics: ensemble errors, spreads, ranks, conservation and
 * self-convergence of the stochastic scheme.
 *
 * Velocity samples are flattened as (u_0, v_0, u_1, v_1, ...) for station data and as
 * (layer-1 u on all cells, layer-1 v on all cells) for whole-domain data.
 */

namespace qgpf {

enum class MetricMode { kStations, kDomain };

std::string to_string(MetricMode m);

std::vector<double> flatten(const std::vector<StationReading>& readings);
std::vector<double> flatten_domain(const CellVelocity& velocity);

/// |truth - mean(members)| / |truth|.
double relative_bias(std::span<const double> truth, const std::vector<std::vector<double>>& members);
/// mean_n |truth - member_n| / |truth|.
double ensemble_mean_error(std::span<const double> truth, const std::vector<std::vector<double>>& members);

/// Members strictly below truth plus a uniformly chosen share of the ties; `u` in [0, 1).
int rank_of_truth(double truth, std::span<const double> members, double u);

class RankHistogram {
 public:
  RankHistogram() = default;
  explicit RankHistogram(int members) : counts_(static_cast<std::size_t>(members) + 1, 0) {}

  void add(int rank);
  [[nodiscard]] const std::vector<long>& counts() const noexcept { return counts_; }
  [[nodiscard]] long samples() const noexcept { return samples_; }
  /// Pearson statistic against the flat histogram.
  [[nodiscard]] double chi_square() const;
  /// Upper-tail probability of chi_square() with N degrees of freedom.
  [[nodiscard]] double p_value() const;

 private:
  std::vector<long> counts_;
  long samples_ = 0;
};

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov distribution.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Kolmogorov survival function Q(t) = 2 sum_k (-1)^(k-1) exp(-2 k^2 t^2).
double kolmogorov_survival(double t);

struct Spread {
  double stddev = 0.0;   ///< population
  double min = 0.0;
  double max = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
  double mean = 0.0;
};

/// Ensemble statistics of one scalar; quantiles interpolate linearly between order statistics.
Spread spread_of(std::vector<double> values);

/// A named scalar series with strictly increasing times.
struct MetricSeries {
  std::string metric;
  MetricMode mode = MetricMode::kStations;
  std::vector<double> times;
  std::vector<double> values;

  void push(double time, double value);
  [[nodiscard]] double mean() const;
  /// Mean over entries with time >= t0.
  [[nodiscard]] double mean_since(double t0) const;
};

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricSeries>& series);
void write_rank_csv(const std::filesystem::path& path, const RankHistogram& h);

/// Per layer: drift of the integral of q and of q^2 relative to the initial state,
/// (I(t) - I(0)) / max(|I(0)|, J(0)) with J the integral of |q| (resp. q^2).
std::vector<MetricSeries> conservation_report(const std::vector<ModelState>& trajectory);

/// Least-squares slope of log(err) against log(dt).
double fit_order(std::span<const double> dt, std::span<const double> err);

struct ConvergenceSetup {
  Grid base_grid;                 ///< coarsest grid; level l has 2^l times the cells per direction
  ModelParams params;             ///< dt is the level-0 step
  StratificationParams strat;
  /// Initial stream-function anomaly psi(layer, x, y); evaluated on every level's cells.
  std::function<double(int, double, double)> psi0;
  int k_modes = 4;
  double xi_amplitude = 1.0;
  double xi_spectrum = 1.0;
  std::uint64_t xi_seed = 1;
  std::uint64_t noise_seed = 1;
  bool noise = true;
  int levels = 4;
  long base_steps = 8;
};

struct ConvergenceResult {
  std::vector<double> dt;      ///< of the compared levels (finest excluded)
  std::vector<double> errors;  ///< RMS PV difference to the finest level on the base grid
  double order = 0.0;
};

/// Joint space-time self-convergence along one Brownian path refined by bridging.
ConvergenceResult convergence_study(const ConvergenceSetup& setup);

}  // namespace qgpf

#endif  // QGPF_DIAGNOSTICS_HPP
