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

#ifndef QGPF_HARNESS_HPP
#define QGPF_HARNESS_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "qgpf/cabaret.hpp"
#include "qgpf/diagnostics.hpp"
#include "qgpf/observations.hpp"
#include "qgpf/particle_filter.hpp"
#include "qgpf/stochastic.hpp"

/**
 * \file
 * \brief Twin-experiment orchestration: spin-up, truth, initial ensemble, assimilation.
 *
 * Time axis: t = 0 is the start of assimilation. The spin-up ends and the truth run
 * starts at t = -ensemble_spinup_s; observations are taken at k * da_interval_s,
 * k = 1 .. assimilation_s / da_interval_s.
 *
 * The INI file uses sections [domain] [physics] [grids] [noise] [filter] [run]
 * [convergence]; every physical quantity carries its unit in the key name
 * (see configs/desk.ini). Missing keys keep their defaults.
 */

namespace qgpf {

struct ConvergenceConfig {
  int base_nx = 16;
  int base_ny = 8;
  double base_dt_s = 4.0 * 3600.0;
  long base_steps = 12;
  int levels = 4;
  int k_modes = 4;
  double xi_amplitude_m_per_sqrt_s = 50.0;
  double psi_amplitude_m2_per_s = 3e4;
};

struct ExperimentConfig {
  double lx_m = 3840e3;
  double ly_m = 1920e3;

  double beta_per_m_s = 2e-11;
  double nu_m2_per_s = 3.125;
  double mu_per_s = 4e-8;
  std::array<double, kLayers> u_m_per_s{0.06, 0.0};
  double s1_per_m2 = 4.22e-9;
  double s2_per_m2 = 1.41e-9;
  double max_courant = 0.5;

  int truth_nx = 130;
  int truth_ny = 66;
  int signal_nx = 65;
  int signal_ny = 33;
  double truth_dt_s = 1800.0;
  double signal_dt_s = 3600.0;
  int station_rows = 4;
  int station_cols = 4;
  std::vector<int> rank_stations{0, 3, 5, 10, 12, 15};

  int k_modes = 8;
  std::string xi_file;  ///< empty: synthesize
  double xi_amplitude_m_per_sqrt_s = 0.3;
  double xi_spectrum = 1.0;
  std::uint64_t xi_seed = 1;

  FilterConfig filter{.mcmc_iterations = 1};  ///< one jitter sweep per tempering stage at desk scale
  Algorithm algorithm = Algorithm::kNudged;

  std::uint64_t seed = 1;
  double spinup_s = 30.0 * 86400.0;
  double spinup_perturbation_m2_per_s = 2e4;
  double ensemble_spinup_s = 8.0 * 3600.0;
  double assimilation_s = 5.0 * 86400.0;
  std::filesystem::path output_dir = "out";

  ConvergenceConfig convergence;

  [[nodiscard]] double da_interval_s() const noexcept { return filter.window; }
  [[nodiscard]] int cycles() const;
  [[nodiscard]] Grid truth_grid() const;
  [[nodiscard]] Grid signal_grid() const;
  [[nodiscard]] StratificationParams strat() const noexcept { return {s1_per_m2, s2_per_m2}; }
  [[nodiscard]] ModelParams model_params(double dt) const;

  /// Throws ConfigError.
  void validate() const;
};

/// Throws ConfigError on unknown sections/keys or unparsable values.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Every key, in the same format parse_config reads.
void write_config(std::ostream& out, const ExperimentConfig& config);

/// Self-convergence setup from the [convergence] section: two smooth channel modes
/// (layer 2 at a third of layer 1) on the base grid, Brownian path from `seed`.
ConvergenceSetup make_convergence_setup(const ExperimentConfig& config, bool noise);

/// The models, noise basis and station layout of one configuration.
struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const Model> truth;
  std::shared_ptr<const Model> signal;
  std::shared_ptr<const StochasticModel> stochastic;
  StationSet stations;
};

Experiment make_experiment(const ExperimentConfig& config);
XiBasis make_xi(const ExperimentConfig& config);

/// Domain-mean kinetic energy of the flow relative to the background, m^2 s^-2.
double eddy_energy(const Model& model, const ModelState& s);

struct SpinupResult {
  ModelState state;     ///< truth grid, time = -ensemble_spinup_s
  MetricSeries energy;  ///< hourly eddy_energy
};

/// Deterministic truth-grid run from rest plus a smooth perturbation of the lowest channel modes.
SpinupResult run_spinup(const Experiment& ex);

/// Block-average the fine stream function onto the coarse grid and rebuild the PV from it.
ModelState coarse_state(const Model& fine, const Model& coarse, const ModelState& s);

struct TruthRun {
  ModelState signal_start;                ///< coarse-grained truth at -ensemble_spinup_s
  std::vector<double> times;              ///< every signal step in [0, assimilation_s]
  std::vector<CellVelocity> velocity;     ///< coarse-grained truth at `times`
  std::vector<ObservationRecord> observations;

  /// Index of `time` in `times`; throws InvalidArgument if absent.
  [[nodiscard]] std::size_t frame(double time) const;
};

TruthRun generate_truth(const Experiment& ex, const ModelState& fine_start);

void save_truth(const std::filesystem::path& dir, const TruthRun& truth);
TruthRun load_truth(const std::filesystem::path& dir, const Experiment& ex);

/// N copies of the signal start, each evolved over the ensemble spin-up with its own stream.
Ensemble init_ensemble(const Experiment& ex, const ModelState& signal_start);

void save_ensemble(const std::filesystem::path& dir, const Ensemble& ens);
Ensemble load_ensemble(const std::filesystem::path& dir, const Experiment& ex);

struct StationSpread {
  double time = 0.0;
  int station = 0;
  char component = 'u';
  double truth = 0.0;
  Spread spread;
};

struct RunResult {
  Algorithm algorithm = Algorithm::kFree;
  std::vector<MetricSeries> metrics;  ///< rb, eme (stations and domain), ess, spread
  std::vector<AssimilationEvent> events;
  std::vector<RankHistogram> ranks;   ///< one per config.rank_stations entry, u and v pooled
  std::vector<StationSpread> spreads;
  Ensemble final;

  [[nodiscard]] const MetricSeries& series(const std::string& metric, MetricMode mode) const;
};

/// One ensemble run over the assimilation window. Metrics are taken on the ensemble that
/// leaves each cycle; ranks compare the truth with the forecast at every model step.
RunResult run_ensemble(const Experiment& ex, Ensemble ens, Algorithm algorithm, const TruthRun& truth);

/// Mean of the per-station, per-component ensemble std over the last day of the run.
double final_day_spread(const RunResult& r, double end_time);

/// Truth files read by an assimilation run.
inline constexpr const char* kTruthFiles[] = {"observations.csv", "truth_velocity.qgf", "signal_start.qgs"};

/// The configured algorithm and a free control from the same ensemble and seeds. Each run
/// reloads the truth directory; the file checksums are written to `out/inputs.csv` and must
/// agree between the runs. Writes metrics, events, ranks, spreads and final ensembles.
std::vector<RunResult> run_assimilation(const Experiment& ex, const Ensemble& ens,
                                        const std::filesystem::path& truth_dir, const std::filesystem::path& out);

void write_run(const std::filesystem::path& dir, const RunResult& r);

/// Headline numbers of a run directory, read back from its CSVs.
struct RunSummary {
  std::string algorithm;
  double eme_stations = 0.0;
  double eme_domain = 0.0;
  double rb_stations = 0.0;
  double final_day_spread = 0.0;
  std::vector<double> rank_chi_square;
};

std::vector<RunSummary> summarize_runs(const std::filesystem::path& dir);

}  // namespace qgpf

#endif  // QGPF_HARNESS_HPP
