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

#ifndef QGPF_OBSERVATIONS_HPP
#define QGPF_OBSERVATIONS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qgpf/grid.hpp"
#include "qgpf/noise.hpp"

/**
 * \file
 * \brief Synthetic station observations and particle weights.
 *
 * Every station reads the layer-1 cell velocity (u, v) of the cell that contains it.
 * Noise scales are kept per station and per component. All weights are handled as
 * logarithms.
 */

namespace qgpf {

inline constexpr double kSigmaFloor = 1e-6;  ///< m/s

/// Per-station noise scales, m/s.
struct StationSigma {
  std::vector<double> u;
  std::vector<double> v;
};

struct ObservationRecord {
  double time = 0.0;                    ///< s
  StationSet stations;
  std::vector<StationReading> values;   ///< observed (u, v), m/s
  StationSigma sigma;
  std::string provenance;               ///< how sigma was obtained

  /// Throws InvalidArgument on size mismatch, non-finite values or sigma <= 0.
  void validate() const;
};

/// Population std of the fine-grid layer-1 velocity inside the coarse cell of each station,
/// floored at kSigmaFloor. Stations live on `coarse_grid`.
StationSigma compute_sigma(const CellVelocity& fine_velocity, const Grid& coarse_grid, const StationSet& stations);

/// Population std over time of each station's reading, floored at kSigmaFloor.
/// `series[t][i]` is the reading of station i at sample t.
StationSigma temporal_sigma(const std::vector<std::vector<StationReading>>& series);

/// Y = truth + eta, eta_i ~ N(0, sigma_i^2) drawn from the observation channel at `cycle`.
ObservationRecord observe_truth(const std::vector<StationReading>& truth, const StationSet& stations,
                                const StationSigma& sigma, const NoiseStream& stream, std::uint64_t cycle, double time,
                                std::string provenance = "coarse-cell");
ObservationRecord observe_truth(const CellVelocity& truth, const StationSet& stations, const StationSigma& sigma,
                                const NoiseStream& stream, std::uint64_t cycle, double time,
                                std::string provenance = "coarse-cell");

/// -1/2 sum_i ((u_i - Yu_i)/su_i)^2 + ((v_i - Yv_i)/sv_i)^2.
double log_likelihood_weight(const std::vector<StationReading>& projected, const ObservationRecord& obs);
double log_likelihood_weight(const CellVelocity& velocity, const ObservationRecord& obs);

/// log_likelihood_weight - sum_k (lambda_k^2 dt / 2 - lambda_k dW_k).
double log_girsanov_weight(const std::vector<StationReading>& projected, const ObservationRecord& obs,
                           std::span<const double> lambda, std::span<const double> dw, double dt);

/// sum_k (lambda_k^2 dt / 2 - lambda_k dW_k).
double girsanov_penalty(std::span<const double> lambda, std::span<const double> dw, double dt);

/// (sum w_i^2)^-1 of the normalized weights. Throws InvalidArgument if no weight is positive.
double ess(std::span<const double> weights);

struct WeightReport {
  std::vector<double> log_weights;
  std::vector<double> normalized;
  double ess = 0.0;
};

/// Normalizes exp(scale * log_weights) with max subtraction; indices are reduced in order.
WeightReport weigh(std::span<const double> log_weights, double scale = 1.0);

void write_observations_csv(const std::filesystem::path& path, const std::vector<ObservationRecord>& records);
/// Reads records written by write_observations_csv; stations are located on `grid`.
std::vector<ObservationRecord> read_observations_csv(const std::filesystem::path& path, const Grid& grid);

}  // namespace qgpf

#endif  // QGPF_OBSERVATIONS_HPP
