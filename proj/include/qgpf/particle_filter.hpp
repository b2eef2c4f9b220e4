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

#ifndef QGPF_PARTICLE_FILTER_HPP
#define QGPF_PARTICLE_FILTER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qgpf/cabaret.hpp"
#include "qgpf/noise.hpp"
#include "qgpf/observations.hpp"
#include "qgpf/stochastic.hpp"

/**
 * \file
 * \brief Ensemble propagation, bootstrap / tempered / nudged assimilation.
 *
 * A particle remembers the state at the start of the current window and every Brownian
 * increment it used inside the window. Jittering re-solves the whole window from that
 * start with correlated increments; nudging acts on the corrector of the last step.
 */

namespace qgpf {

enum class Algorithm { kFree, kBootstrap, kTempered, kNudged };

std::string to_string(Algorithm a);
/// Accepts free, bootstrap, tempered, nudged.
Algorithm parse_algorithm(const std::string& name);

enum class TemperingMode {
  kIncremental,  ///< stage k reweights by the increment 1/p
  kLiteral,      ///< stage k reweights by the cumulative k/p
};

struct FilterConfig {
  int n = 20;
  double n_star = 16.0;
  double rho = 0.9999;
  int mcmc_iterations = 20;
  double window = 4.0 * 3600.0;  ///< s
  TemperingMode tempering = TemperingMode::kIncremental;
  bool renudge_proposals = false;  ///< MCMC proposals re-apply nudging on their last step
  bool girsanov_in_mcmc = true;    ///< nudged MCMC compares Girsanov-corrected weights
  std::uint64_t seed = 0;          ///< resampling offsets and acceptance draws

  void validate() const;
};

struct Particle {
  ModelState state;
  ModelState window_start;
  NoiseStream stream;
  double log_weight = 0.0;      ///< weight carried over from earlier cycles
  double log_likelihood = 0.0;  ///< of `state` against the latest observation (Girsanov term included)
  std::vector<double> window_dw;  ///< steps x K increments of the last window
  std::vector<double> lambda;     ///< K drift values of the last step; empty if not nudged
};

struct Ensemble {
  std::vector<Particle> particles;
  std::uint64_t cycle = 0;

  [[nodiscard]] std::size_t size() const noexcept { return particles.size(); }
  [[nodiscard]] double time() const { return particles.empty() ? 0.0 : particles.front().state.time; }
};

/// Particle n gets NoiseStream(seed, n).
Ensemble make_ensemble(std::vector<ModelState> states, std::uint64_t seed);

/// Stations, observation and step size of a nudged corrector.
///
///     q(lambda) = A + sum_k B_k (dW_k + lambda_k dt)
///
/// `b` holds the station velocity response of each B_k (rows u_0, v_0, u_1, ..., column-major
/// by mode), `r` the station residual P(A) - Y and `sigma` the noise scale of every row.
struct NudgeSystem {
  int rows = 0;
  int modes = 0;
  std::vector<double> b;
  std::vector<double> r;
  std::vector<double> sigma;
  double dt = 0.0;

  [[nodiscard]] double response(int row, int k) const { return b[static_cast<std::size_t>(k) * rows + row]; }
  /// 1/2 |S^-1 B lambda dt|^2 + <S^-2 r, B lambda dt> + sum lambda^2 dt / 2.
  [[nodiscard]] double q1(std::span<const double> lambda) const;
  [[nodiscard]] std::vector<double> gradient(std::span<const double> lambda) const;
};

/// Solves (dt^2 B^T S^-2 B + dt I) lambda = -dt B^T S^-2 r.
std::vector<double> solve_nudge(const NudgeSystem& system);

/// Builds the system of one particle from its state at the start of the step and the
/// predictor/extrapolator output of that step.
NudgeSystem assemble_nudge(const StochasticModel& sm, const ModelState& s, const StochasticModel::Stages& stages,
                           const ObservationRecord& obs);

/// Advances `start` through `steps` steps using the increments `dw` (steps x K). With
/// `nudge_obs`, the last corrector is nudged towards it and lambda is written to `lambda_out`.
/// CFL failures are re-raised with the step index and `particle`.
/// Called after every forward model step with the particle index; must be safe to call concurrently
/// for distinct particles.
using StepObserver = std::function<void(int particle, const ModelState& state)>;

ModelState run_window(const StochasticModel& sm, const ModelState& start, std::span<const double> dw, long steps,
                      const ObservationRecord* nudge_obs = nullptr, std::vector<double>* lambda_out = nullptr,
                      int particle = -1, const StepObserver* observer = nullptr);

/// Number of model steps in [t0, t1]; throws InvalidArgument unless an integer multiple of dt.
long steps_between(double t0, double t1, double dt);

/// Advances every particle to t1 with its own increments. CFL failures name the particle.
void propagate(Ensemble& ens, const StochasticModel& sm, double t1, const ObservationRecord* nudge_obs = nullptr,
               const StepObserver* observer = nullptr);

/// Layer-1 station readings of a state (fresh inversion, background flow included).
std::vector<StationReading> project(const Model& model, const ModelState& s, const StationSet& stations);

/// Log-likelihood of a particle; the Girsanov term enters when `girsanov` and lambda is set.
double particle_log_weight(const Model& model, const Particle& p, const ObservationRecord& obs, bool girsanov);

/// Systematic resampling with one offset `u` in [0, 1).
std::vector<int> systematic_resample(std::span<const double> weights, double u);

/// Smallest p >= 1 with ess(exp(log_weights / p)) >= n_star.
int find_tempering_steps(std::span<const double> log_weights, double n_star);

/// Exponents applied at each tempering stage, as numerators over a common p.
struct TemperingLedger {
  int p = 1;
  std::vector<int> numerators;

  [[nodiscard]] double exponent(int stage) const { return static_cast<double>(numerators.at(stage)) / p; }
  /// True when the increments compose to exponent 1 exactly.
  [[nodiscard]] bool exact() const;
};

TemperingLedger make_ledger(int p, TemperingMode mode);

/// Metropolis-Hastings passes at temperature phi; returns the acceptance rate.
double jitter_mcmc(Ensemble& ens, const ObservationRecord& obs, double phi, const FilterConfig& config,
                   const StochasticModel& sm, bool nudged, int stage);

struct AssimilationEvent {
  double time = 0.0;
  Algorithm algorithm = Algorithm::kFree;
  double ess_before = 0.0;
  int p_stages = 0;
  std::vector<double> stage_ess;
  double accept_rate = 0.0;
  double mean_abs_lambda = 0.0;
  bool resampled = false;
};

AssimilationEvent assimilate_bootstrap(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                       const StochasticModel& sm);
AssimilationEvent assimilate_tempered(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                      const StochasticModel& sm);
/// Expects the ensemble to have been propagated with `obs` as the nudging target.
AssimilationEvent assimilate_nudged(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                    const StochasticModel& sm);

/// Propagate to obs.time, then assimilate with the chosen algorithm (no weighting for kFree).
/// Propagate to obs.time (nudged for kNudged), then assimilate. The observer sees the forecast steps only.
AssimilationEvent assimilation_cycle(Ensemble& ens, Algorithm algorithm, const ObservationRecord& obs,
                                     const FilterConfig& config, const StochasticModel& sm,
                                     const StepObserver* observer = nullptr);

void write_event_log(const std::filesystem::path& path, const std::vector<AssimilationEvent>& events);

}  // namespace qgpf

#endif  // QGPF_PARTICLE_FILTER_HPP
