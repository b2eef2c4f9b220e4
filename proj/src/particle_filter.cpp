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

#include "qgpf/particle_filter.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <utility>

#include "qgpf/kernels.hpp"

namespace qgpf {

namespace {

// Stream used for decisions that concern the whole ensemble.
constexpr std::uint64_t kFilterStreamId = 0xF117E8ULL;

std::uint32_t jitter_serial(int stage, int m) {
  return static_cast<std::uint32_t>(stage) * 65536u + static_cast<std::uint32_t>(m) + 1u;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Velocity response at the stations to a PV perturbation (no background flow).
std::vector<StationReading> linear_response(const Model& model, const LayeredField& dq, const StationSet& stations) {
  const EllipticSolution sol = model.elliptic().invert(dq, 0.0);
  const FaceField vel = model.face_velocity(sol.psi, sol.wall, false);
  const Grid& g = model.grid();
  CellVelocity cv{LayeredField(g), LayeredField(g)};
  kernels::cell_velocity(g, vel.xf(0), vel.yf(0), cv.u.layer(0), cv.v.layer(0));
  return sample_at_stations(cv, stations);
}

void resample_into(Ensemble& ens, const std::vector<int>& ancestors) {
  std::vector<Particle> next;
  next.reserve(ens.particles.size());
  for (std::size_t n = 0; n < ancestors.size(); ++n) {
    Particle p = ens.particles[static_cast<std::size_t>(ancestors[n])];
    p.stream = ens.particles[n].stream;
    next.push_back(std::move(p));
  }
  ens.particles = std::move(next);
}

void score(Ensemble& ens, const Model& model, const ObservationRecord& obs, bool girsanov) {
  const int n = static_cast<int>(ens.size());
  std::vector<std::exception_ptr> errors(ens.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      auto& p = ens.particles[static_cast<std::size_t>(i)];
      p.log_likelihood = particle_log_weight(model, p, obs, girsanov);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  rethrow_first(errors);
}

std::vector<double> targets(const Ensemble& ens) {
  std::vector<double> t;
  t.reserve(ens.size());
  for (const auto& p : ens.particles) t.push_back(p.log_weight + p.log_likelihood);
  return t;
}

double mean_abs_lambda(const Ensemble& ens) {
  double s = 0.0;
  std::size_t c = 0;
  for (const auto& p : ens.particles) {
    for (double l : p.lambda) {
      s += std::abs(l);
      ++c;
    }
  }
  return c > 0 ? s / static_cast<double>(c) : 0.0;
}

AssimilationEvent tempered(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                           const StochasticModel& sm, bool nudged) {
  config.validate();
  if (ens.size() != static_cast<std::size_t>(config.n)) throw InvalidArgument("ensemble size differs from config n");
  AssimilationEvent ev;
  ev.time = obs.time;
  ev.algorithm = nudged ? Algorithm::kNudged : Algorithm::kTempered;
  ev.mean_abs_lambda = mean_abs_lambda(ens);
  score(ens, sm.model(), obs, nudged);
  const auto target = targets(ens);
  ev.ess_before = weigh(target).ess;
  if (ev.ess_before >= config.n_star) {
    for (auto& p : ens.particles) p.log_weight += p.log_likelihood;
    ++ens.cycle;
    return ev;
  }
  const int p = find_tempering_steps(target, config.n_star);
  const TemperingLedger ledger = make_ledger(p, config.tempering);
  ev.p_stages = p;
  ev.resampled = true;
  const NoiseStream filter(config.seed, kFilterStreamId);
  double accept = 0.0;
  for (int k = 0; k < p; ++k) {
    const auto w = weigh(targets(ens), ledger.exponent(k));
    ev.stage_ess.push_back(w.ess);
    resample_into(ens, systematic_resample(w.normalized, filter.uniform(Channel::kResample, ens.cycle, k)));
    const double phi = static_cast<double>(k + 1) / p;
    accept += jitter_mcmc(ens, obs, phi, config, sm, nudged, k);
  }
  ev.accept_rate = accept / p;
  for (auto& q : ens.particles) q.log_weight = 0.0;
  ++ens.cycle;
  return ev;
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kFree:
      return "free";
    case Algorithm::kBootstrap:
      return "bootstrap";
    case Algorithm::kTempered:
      return "tempered";
    case Algorithm::kNudged:
      return "nudged";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "free") return Algorithm::kFree;
  if (name == "bootstrap") return Algorithm::kBootstrap;
  if (name == "tempered") return Algorithm::kTempered;
  if (name == "nudged") return Algorithm::kNudged;
  throw ConfigError("unknown algorithm '" + name + "' (expected free, bootstrap, tempered or nudged)");
}

void FilterConfig::validate() const {
  if (n < 1) throw ConfigError("ensemble size must be at least 1");
  if (!(n_star >= 1.0 && n_star <= n)) throw ConfigError("ESS threshold must lie in [1, N]");
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("jitter correlation rho must lie in (0, 1]");
  if (mcmc_iterations < 0 || mcmc_iterations >= 65535) throw ConfigError("MCMC iteration count out of range");
  if (!(window > 0.0)) throw ConfigError("assimilation interval must be positive");
}

Ensemble make_ensemble(std::vector<ModelState> states, std::uint64_t seed) {
  Ensemble ens;
  ens.particles.reserve(states.size());
  for (std::size_t n = 0; n < states.size(); ++n) {
    Particle p;
    p.window_start = states[n];
    p.state = std::move(states[n]);
    p.stream = NoiseStream(seed, n);
    ens.particles.push_back(std::move(p));
  }
  return ens;
}

double NudgeSystem::q1(std::span<const double> lambda) const {
  double quad = 0.0;
  double cross = 0.0;
  for (int i = 0; i < rows; ++i) {
    double bl = 0.0;
    for (int k = 0; k < modes; ++k) bl += response(i, k) * lambda[static_cast<std::size_t>(k)] * dt;
    const double s = sigma[static_cast<std::size_t>(i)];
    quad += (bl / s) * (bl / s);
    cross += r[static_cast<std::size_t>(i)] * bl / (s * s);
  }
  double pen = 0.0;
  for (int k = 0; k < modes; ++k) pen += lambda[static_cast<std::size_t>(k)] * lambda[static_cast<std::size_t>(k)];
  return 0.5 * quad + cross + 0.5 * pen * dt;
}

std::vector<double> NudgeSystem::gradient(std::span<const double> lambda) const {
  std::vector<double> g(static_cast<std::size_t>(modes), 0.0);
  for (int i = 0; i < rows; ++i) {
    double bl = 0.0;
    for (int k = 0; k < modes; ++k) bl += response(i, k) * lambda[static_cast<std::size_t>(k)] * dt;
    const double s2 = sigma[static_cast<std::size_t>(i)] * sigma[static_cast<std::size_t>(i)];
    const double c = (bl + r[static_cast<std::size_t>(i)]) / s2;
    for (int k = 0; k < modes; ++k) g[static_cast<std::size_t>(k)] += c * response(i, k) * dt;
  }
  for (int k = 0; k < modes; ++k) g[static_cast<std::size_t>(k)] += lambda[static_cast<std::size_t>(k)] * dt;
  return g;
}

std::vector<double> solve_nudge(const NudgeSystem& sys) {
  const auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (sys.b.size() != static_cast<std::size_t>(sys.rows) * sys.modes || sys.r.size() != static_cast<std::size_t>(sys.rows) ||
      sys.sigma.size() != static_cast<std::size_t>(sys.rows)) {
    throw InvalidArgument("nudge system dimensions are inconsistent");
  }
  if (!finite(sys.b) || !finite(sys.r) || !finite(sys.sigma) || !std::isfinite(sys.dt) || !(sys.dt > 0.0)) {
    throw NumericalError("nudge system has non-finite entries");
  }
  const Eigen::Map<const Eigen::MatrixXd> b(sys.b.data(), sys.rows, sys.modes);
  const Eigen::Map<const Eigen::VectorXd> r(sys.r.data(), sys.rows);
  const Eigen::VectorXd inv_s2 =
      Eigen::Map<const Eigen::VectorXd>(sys.sigma.data(), sys.rows).array().square().inverse().matrix();
  const Eigen::MatrixXd bts = b.transpose() * inv_s2.asDiagonal();
  Eigen::MatrixXd m = sys.dt * sys.dt * (bts * b);
  m.diagonal().array() += sys.dt;
  const Eigen::VectorXd rhs = -sys.dt * (bts * r);
  const Eigen::VectorXd lambda = m.ldlt().solve(rhs);
  if (!lambda.allFinite()) throw NumericalError("nudge solve produced non-finite values");
  return {lambda.data(), lambda.data() + lambda.size()};
}

NudgeSystem assemble_nudge(const StochasticModel& sm, const ModelState& s, const StochasticModel::Stages& stages,
                           const ObservationRecord& obs) {
  const Model& model = sm.model();
  const Grid& g = model.grid();
  NudgeSystem sys;
  sys.modes = sm.modes();
  sys.rows = static_cast<int>(2 * obs.stations.size());
  sys.dt = model.params().dt;

  // A: the corrector without noise.
  const LayeredField a = model.corrector(stages.half, stages.ext, nullptr);
  LayeredField a_anom(g);
  for (std::size_t c = 0; c < a.values().size(); ++c) {
    a_anom.values()[c] = a.values()[c] - model.background_pv().values()[c];
  }
  const EllipticSolution sol = model.elliptic().invert(a_anom, s.mass);
  const auto pa = sample_at_stations(model.cell_velocity(sol.psi, sol.wall), obs.stations);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    sys.r.push_back(pa[i].u - obs.values[i].u);
    sys.r.push_back(pa[i].v - obs.values[i].v);
    sys.sigma.push_back(obs.sigma.u[i]);
    sys.sigma.push_back(obs.sigma.v[i]);
  }

  // B_k = (G_k(q~) + G_kb) / 2.
  sys.b.reserve(static_cast<std::size_t>(sys.rows) * sys.modes);
  for (int k = 0; k < sys.modes; ++k) {
    LayeredField bk = sm.mode_tendency(stages.ext.q_faces, k);
    for (double& x : bk.values()) x *= 0.5;
    for (const auto& rd : linear_response(model, bk, obs.stations)) {
      sys.b.push_back(rd.u);
      sys.b.push_back(rd.v);
    }
  }
  return sys;
}

ModelState run_window(const StochasticModel& sm, const ModelState& start, std::span<const double> dw, long steps,
                      const ObservationRecord* nudge_obs, std::vector<double>* lambda_out, int particle,
                      const StepObserver* observer) {
  const auto k = static_cast<std::size_t>(sm.modes());
  if (dw.size() != k * static_cast<std::size_t>(steps)) throw InvalidArgument("window increments have the wrong length");
  ModelState s = start;
  if (lambda_out != nullptr) lambda_out->clear();
  for (long n = 0; n < steps; ++n) {
    const auto inc = dw.subspan(static_cast<std::size_t>(n) * k, k);
    try {
      if (nudge_obs != nullptr && n == steps - 1) {
        StochasticModel::Stages st = sm.predict(s, inc);
        const std::vector<double> lambda = solve_nudge(assemble_nudge(sm, s, st, *nudge_obs));
        LayeredField q = sm.correct(st, inc, lambda);
        sm.commit(s, std::move(st), std::move(q));
        if (lambda_out != nullptr) *lambda_out = lambda;
      } else {
        sm.step(s, inc);
      }
    } catch (const CflError& e) {
      throw CflError(e.courant(), sm.model().params().max_courant, s.step, particle);
    }
    if (observer != nullptr) (*observer)(particle, s);
  }
  return s;
}

long steps_between(double t0, double t1, double dt) {
  if (!(t1 > t0)) throw InvalidArgument("propagation needs t1 > t0");
  const double r = (t1 - t0) / dt;
  const long n = std::lround(r);
  if (n < 1 || std::abs(r - static_cast<double>(n)) > 1e-9 * std::max(1.0, r)) {
    throw InvalidArgument("interval is not an integer multiple of dt");
  }
  return n;
}

void propagate(Ensemble& ens, const StochasticModel& sm, double t1, const ObservationRecord* nudge_obs,
               const StepObserver* observer) {
  if (ens.particles.empty()) return;
  const double dt = sm.model().params().dt;
  const long steps = steps_between(ens.time(), t1, dt);
  const auto k = static_cast<std::size_t>(sm.modes());
  const int n = static_cast<int>(ens.size());
  std::vector<std::exception_ptr> errors(ens.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    auto& p = ens.particles[static_cast<std::size_t>(i)];
    try {
      p.window_start = p.state;
      p.window_dw.assign(k * static_cast<std::size_t>(steps), 0.0);
      for (long s = 0; s < steps; ++s) {
        p.stream.increments(static_cast<std::uint64_t>(p.state.step + s), dt,
                            std::span<double>(p.window_dw).subspan(static_cast<std::size_t>(s) * k, k));
      }
      p.state = run_window(sm, p.window_start, p.window_dw, steps, nudge_obs, &p.lambda, i, observer);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  rethrow_first(errors);
}

std::vector<StationReading> project(const Model& model, const ModelState& s, const StationSet& stations) {
  return sample_at_stations(model.cell_velocity(s), stations);
}

double particle_log_weight(const Model& model, const Particle& p, const ObservationRecord& obs, bool girsanov) {
  const auto proj = project(model, p.state, obs.stations);
  if (!girsanov || p.lambda.empty()) return log_likelihood_weight(proj, obs);
  const std::size_t k = p.lambda.size();
  if (p.window_dw.size() < k) throw InvalidArgument("particle has no cached increments");
  const std::span<const double> last(p.window_dw.data() + p.window_dw.size() - k, k);
  return log_girsanov_weight(proj, obs, p.lambda, last, model.params().dt);
}

std::vector<int> systematic_resample(std::span<const double> weights, double u) {
  const std::size_t n = weights.size();
  if (n == 0) throw InvalidArgument("no weights to resample");
  if (!(u >= 0.0 && u < 1.0)) throw InvalidArgument("resampling offset must lie in [0, 1)");
  std::vector<int> out(n);
  double cum = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = (u + static_cast<double>(i)) / static_cast<double>(n);
    while (pos >= cum && j + 1 < n) cum += weights[++j];
    out[i] = static_cast<int>(j);
  }
  return out;
}

int find_tempering_steps(std::span<const double> log_weights, double n_star) {
  const auto ok = [&](long p) { return weigh(log_weights, 1.0 / static_cast<double>(p)).ess >= n_star; };
  if (ok(1)) return 1;
  long hi = 2;
  while (!ok(hi)) {
    hi *= 2;
    if (hi > (1L << 30)) throw NumericalError("no tempering exponent reaches the ESS threshold");
  }
  long lo = hi / 2;
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return static_cast<int>(hi);
}

bool TemperingLedger::exact() const {
  long sum = 0;
  for (int x : numerators) sum += x;
  return sum == p;
}

TemperingLedger make_ledger(int p, TemperingMode mode) {
  if (p < 1) throw InvalidArgument("tempering needs p >= 1");
  TemperingLedger l;
  l.p = p;
  for (int k = 1; k <= p; ++k) l.numerators.push_back(mode == TemperingMode::kIncremental ? 1 : k);
  return l;
}

double jitter_mcmc(Ensemble& ens, const ObservationRecord& obs, double phi, const FilterConfig& config,
                   const StochasticModel& sm, bool nudged, int stage) {
  if (config.mcmc_iterations == 0 || ens.particles.empty()) return 0.0;
  const Model& model = sm.model();
  const double dt = model.params().dt;
  const auto k = static_cast<std::size_t>(sm.modes());
  const double rho = config.rho;
  const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const bool use_g = nudged && config.girsanov_in_mcmc;
  const ObservationRecord* renudge = (nudged && config.renudge_proposals) ? &obs : nullptr;
  const int n = static_cast<int>(ens.size());
  std::vector<int> accepted(ens.size(), 0);
  std::vector<std::exception_ptr> errors(ens.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    auto& p = ens.particles[static_cast<std::size_t>(i)];
    try {
      const long steps = static_cast<long>(p.window_dw.size() / std::max<std::size_t>(k, 1));
      if (steps == 0) continue;
      double current = particle_log_weight(model, p, obs, use_g);
      std::vector<double> fresh(k);
      Particle prop;
      for (int m = 0; m < config.mcmc_iterations; ++m) {
        const std::uint32_t serial = jitter_serial(stage, m);
        prop.window_dw.resize(p.window_dw.size());
        for (long s = 0; s < steps; ++s) {
          p.stream.increments(static_cast<std::uint64_t>(p.window_start.step + s), dt, fresh, Channel::kJitter, serial);
          for (std::size_t c = 0; c < k; ++c) {
            const std::size_t at = static_cast<std::size_t>(s) * k + c;
            prop.window_dw[at] = rho * p.window_dw[at] + rho_c * fresh[c];
          }
        }
        prop.state = run_window(sm, p.window_start, prop.window_dw, steps, renudge, &prop.lambda, i);
        const double candidate = particle_log_weight(model, prop, obs, use_g);
        const double alpha = std::exp(phi * (candidate - current));
        const double u = p.stream.uniform(Channel::kAccept, ens.cycle, serial);
        if (alpha >= 1.0 || u < alpha) {
          p.state = std::move(prop.state);
          std::swap(p.window_dw, prop.window_dw);
          p.lambda = prop.lambda;
          current = candidate;
          ++accepted[static_cast<std::size_t>(i)];
        }
      }
      p.log_likelihood = use_g == nudged ? current : particle_log_weight(model, p, obs, nudged);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  rethrow_first(errors);
  long total = 0;
  for (int a : accepted) total += a;
  return static_cast<double>(total) / (static_cast<double>(n) * config.mcmc_iterations);
}

AssimilationEvent assimilate_bootstrap(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                       const StochasticModel& sm) {
  config.validate();
  AssimilationEvent ev;
  ev.time = obs.time;
  ev.algorithm = Algorithm::kBootstrap;
  score(ens, sm.model(), obs, false);
  const auto w = weigh(targets(ens));
  ev.ess_before = w.ess;
  if (w.ess < config.n_star) {
    const NoiseStream filter(config.seed, kFilterStreamId);
    resample_into(ens, systematic_resample(w.normalized, filter.uniform(Channel::kResample, ens.cycle, 0)));
    for (auto& p : ens.particles) p.log_weight = 0.0;
    ev.resampled = true;
    ev.p_stages = 1;
    ev.stage_ess.push_back(w.ess);
  } else {
    for (auto& p : ens.particles) p.log_weight += p.log_likelihood;
  }
  ++ens.cycle;
  return ev;
}

AssimilationEvent assimilate_tempered(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                      const StochasticModel& sm) {
  return tempered(ens, obs, config, sm, false);
}

AssimilationEvent assimilate_nudged(Ensemble& ens, const ObservationRecord& obs, const FilterConfig& config,
                                    const StochasticModel& sm) {
  return tempered(ens, obs, config, sm, true);
}

AssimilationEvent assimilation_cycle(Ensemble& ens, Algorithm algorithm, const ObservationRecord& obs,
                                     const FilterConfig& config, const StochasticModel& sm,
                                     const StepObserver* observer) {
  propagate(ens, sm, obs.time, algorithm == Algorithm::kNudged ? &obs : nullptr, observer);
  switch (algorithm) {
    case Algorithm::kBootstrap:
      return assimilate_bootstrap(ens, obs, config, sm);
    case Algorithm::kTempered:
      return assimilate_tempered(ens, obs, config, sm);
    case Algorithm::kNudged:
      return assimilate_nudged(ens, obs, config, sm);
    case Algorithm::kFree:
      break;
  }
  AssimilationEvent ev;
  ev.time = obs.time;
  ev.algorithm = Algorithm::kFree;
  ev.ess_before = static_cast<double>(ens.size());
  ++ens.cycle;
  return ev;
}

void write_event_log(const std::filesystem::path& path, const std::vector<AssimilationEvent>& events) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "time_s,algorithm,ess_before,p_stages,stage_ess,mcmc_accept_rate,mean_abs_lambda\n";
  char buf[64];
  for (const auto& e : events) {
    std::string stages;
    for (std::size_t i = 0; i < e.stage_ess.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.6g", i ? ";" : "", e.stage_ess[i]);
      stages += buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", e.time);
    out << buf << ',' << to_string(e.algorithm) << ',';
    std::snprintf(buf, sizeof buf, "%.6g", e.ess_before);
    out << buf << ',' << e.p_stages << ',' << stages << ',';
    std::snprintf(buf, sizeof buf, "%.6g,%.6g", e.accept_rate, e.mean_abs_lambda);
    out << buf << '\n';
  }
}

}  // namespace qgpf
