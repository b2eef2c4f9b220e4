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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "qgpf/diagnostics.hpp"
#include "qgpf/particle_filter.hpp"
#include "test_support.hpp"

namespace {

using qgpf::Ensemble;
using qgpf::FilterConfig;
using qgpf::Grid;
using qgpf::ModelState;
using qgpf::NudgeSystem;
using qgpf::ObservationRecord;
using qgpf::StochasticModel;
namespace t = qgpf::testing;

constexpr double kDt = 3600.0;

struct Twin {
  Grid g{32, 16, t::kLx, t::kLy};
  std::shared_ptr<const qgpf::Model> model;
  StochasticModel sm;
  ModelState s0;
  qgpf::StationSet stations;

  explicit Twin(int k = 4, double amplitude = 3.0)
      : model(t::make_model(g, t::paper_params(kDt))),
        sm(model, std::make_shared<const qgpf::XiBasis>(qgpf::synthesize_xi(g, k, 1.0, 77, amplitude))),
        s0(model->state_from_psi(t::smooth_psi(g, 4, 2e4), {0.0, 0.0})),
        stations(qgpf::make_equidistant_stations(g, 4, 4)) {
    model->advance(s0, 3);
    s0.time = 0.0;  // windows below are measured from here
  }

  Ensemble ensemble(int n, std::uint64_t seed = 11) const {
    return qgpf::make_ensemble(std::vector<ModelState>(static_cast<std::size_t>(n), s0), seed);
  }

  // Observation of a perturbed copy of s0 advanced to `time`.
  ObservationRecord observe(double time, double sigma, std::uint64_t seed = 3) const {
    Ensemble truth = qgpf::make_ensemble({s0}, seed + 1000);
    qgpf::propagate(truth, sm, time);
    const auto readings = qgpf::project(*model, truth.particles[0].state, stations);
    const qgpf::StationSigma s{std::vector<double>(stations.size(), sigma), std::vector<double>(stations.size(), sigma)};
    return qgpf::observe_truth(readings, stations, s, qgpf::NoiseStream(seed, 0), 0, time);
  }
};

double field_diff(const ModelState& a, const ModelState& b) { return t::max_abs_diff(a.q.values(), b.q.values()); }

// --- resampling ---

TEST(SystematicResample, AllWeightOnOneParticle) {
  std::vector<double> w(7, 0.0);
  w[4] = 1.0;
  for (double u : {0.0, 0.3, 0.999}) {
    for (int a : qgpf::systematic_resample(w, u)) EXPECT_EQ(a, 4);
  }
}

TEST(SystematicResample, UniformWeightsEnumerate) {
  const std::vector<double> w(10, 0.1);
  const auto a = qgpf::systematic_resample(w, 0.5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a[static_cast<std::size_t>(i)], i);
}

TEST(SystematicResample, HandWalk) {
  const std::vector<double> w{0.75, 0.25, 0.0, 0.0};
  EXPECT_EQ(qgpf::systematic_resample(w, 0.0), (std::vector<int>{0, 0, 0, 1}));
}

TEST(SystematicResample, OffspringWithinOneOfExpectation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(13);
    for (double& x : w) x = d(rng);
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= s;
    std::vector<int> count(w.size(), 0);
    for (int a : qgpf::systematic_resample(w, d(rng))) ++count[static_cast<std::size_t>(a)];
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LT(std::abs(count[i] - 13 * w[i]), 1.0 + 1e-12);
  }
}

TEST(SystematicResample, UnbiasedOverManyDraws) {
  const std::vector<double> w{0.05, 0.2, 0.33, 0.12, 0.3};
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  const int draws = 100000;
  std::vector<double> total(w.size(), 0.0);
  for (int r = 0; r < draws; ++r) {
    for (int a : qgpf::systematic_resample(w, d(rng))) total[static_cast<std::size_t>(a)] += 1.0;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double expected = w.size() * w[i];
    EXPECT_NEAR(total[i] / draws, expected, 0.01 * expected);
  }
}

TEST(SystematicResample, RejectsBadOffset) {
  EXPECT_THROW(qgpf::systematic_resample(std::vector<double>{1.0}, 1.0), qgpf::InvalidArgument);
}

// --- tempering ---

TEST(Tempering, EqualOrGoodWeightsNeedOneStage) {
  EXPECT_EQ(qgpf::find_tempering_steps(std::vector<double>(20, -3.0), 16.0), 1);
  EXPECT_EQ(qgpf::find_tempering_steps(std::vector<double>{0.0, -0.01, -0.02, 0.0}, 3.0), 1);
}

TEST(Tempering, MatchesScalarSearch) {
  std::vector<double> lw(100, -50.0);
  lw[0] = 0.0;
  int brute = 1;
  while (qgpf::weigh(lw, 1.0 / brute).ess < 80.0) ++brute;
  EXPECT_EQ(qgpf::find_tempering_steps(lw, 80.0), brute);
  EXPECT_GT(brute, 1);
}

TEST(Tempering, ContractOnRandomWeights) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> d(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> lw(20 + trial % 30);
    const double scale = std::pow(10.0, trial % 5);
    for (double& x : lw) x = scale * d(rng);
    const double n_star = 0.8 * lw.size();
    const int p = qgpf::find_tempering_steps(lw, n_star);
    EXPECT_GE(qgpf::weigh(lw, 1.0 / p).ess, n_star);
    if (p > 1) EXPECT_LT(qgpf::weigh(lw, 1.0 / (p - 1)).ess, n_star);
  }
}

TEST(Tempering, LedgerComposesToOne) {
  for (int p : {1, 2, 3, 7, 10, 1000}) {
    const auto inc = qgpf::make_ledger(p, qgpf::TemperingMode::kIncremental);
    EXPECT_TRUE(inc.exact());
    EXPECT_EQ(inc.numerators.size(), static_cast<std::size_t>(p));
    const auto lit = qgpf::make_ledger(p, qgpf::TemperingMode::kLiteral);
    EXPECT_EQ(lit.exact(), p == 1);
    EXPECT_EQ(lit.exponent(p - 1), 1.0);
  }
}

// --- nudging ---

NudgeSystem random_system(std::mt19937_64& rng, int rows, int modes, double dt) {
  std::normal_distribution<double> d(0.0, 1.0);
  NudgeSystem s;
  s.rows = rows;
  s.modes = modes;
  s.dt = dt;
  for (int i = 0; i < rows * modes; ++i) s.b.push_back(1e-3 * d(rng));
  for (int i = 0; i < rows; ++i) {
    s.r.push_back(0.1 * d(rng));
    s.sigma.push_back(0.05 + 0.1 * std::abs(d(rng)));
  }
  return s;
}

TEST(Nudge, ZeroResponseGivesZeroDrift) {
  NudgeSystem s;
  s.rows = 4;
  s.modes = 3;
  s.dt = 100.0;
  s.b.assign(12, 0.0);
  s.r = {1.0, -2.0, 0.5, 3.0};
  s.sigma.assign(4, 0.1);
  for (double l : qgpf::solve_nudge(s)) EXPECT_EQ(l, 0.0);
}

TEST(Nudge, ScalarClosedForm) {
  const double b = 0.7;
  const double a = 0.4;
  const double y = 0.1;
  const double sigma = 0.2;
  const double dt = 3.0;
  NudgeSystem s;
  s.rows = 1;
  s.modes = 1;
  s.dt = dt;
  s.b = {b};
  s.r = {a - y};
  s.sigma = {sigma};
  const double expected = -b * (a - y) / (sigma * sigma) / (dt * b * b / (sigma * sigma) + 1.0);
  EXPECT_NEAR(qgpf::solve_nudge(s)[0], expected, 1e-12 * std::abs(expected));
}

TEST(Nudge, OptimalityOnRandomSystems) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_system(rng, 32, 1 + trial % 12, 3600.0);
    const auto lam = qgpf::solve_nudge(s);
    double rn = 0.0;
    for (double x : s.r) rn += x * x;
    double gn = 0.0;
    for (double x : s.gradient(lam)) gn += x * x;
    EXPECT_LE(std::sqrt(gn), 1e-8 * (1.0 + std::sqrt(rn)));
    const double q = s.q1(lam);
    EXPECT_LE(q, s.q1(std::vector<double>(lam.size(), 0.0)));
    for (std::size_t k = 0; k < lam.size(); ++k) {
      for (double eps : {1e-4, -1e-4}) {
        auto l2 = lam;
        l2[k] += eps;
        EXPECT_LE(q, s.q1(l2));
      }
    }
  }
}

TEST(Nudge, RejectsNonFiniteSystem) {
  NudgeSystem s;
  s.rows = 1;
  s.modes = 1;
  s.dt = 1.0;
  s.b = {std::nan("")};
  s.r = {0.0};
  s.sigma = {1.0};
  EXPECT_THROW((void)qgpf::solve_nudge(s), qgpf::NumericalError);
}

TEST(Nudge, StationResponseIsExactForTheCorrector) {
  Twin f(4);
  const auto obs = f.observe(kDt, 0.01);
  std::vector<double> dw(4);
  qgpf::NoiseStream(2, 0).increments(0, kDt, dw);
  const auto st = f.sm.predict(f.s0, dw);
  const auto sys = qgpf::assemble_nudge(f.sm, f.s0, st, obs);
  const std::vector<double> lambda{1e-3, -2e-3, 5e-4, 0.0};
  ModelState next = f.s0;
  auto stages = f.sm.predict(f.s0, dw);
  auto q = f.sm.correct(stages, dw, lambda);
  f.sm.commit(next, std::move(stages), std::move(q));
  const auto proj = qgpf::project(*f.model, next, f.stations);
  double scale = 0.0;
  double err = 0.0;
  for (int i = 0; i < sys.rows; ++i) {
    double lin = sys.r[static_cast<std::size_t>(i)];
    for (int k = 0; k < sys.modes; ++k) lin += sys.response(i, k) * (dw[static_cast<std::size_t>(k)] + lambda[static_cast<std::size_t>(k)] * kDt);
    const auto& rd = proj[static_cast<std::size_t>(i / 2)];
    const auto& y = obs.values[static_cast<std::size_t>(i / 2)];
    const double actual = (i % 2 == 0) ? rd.u - y.u : rd.v - y.v;
    err = std::max(err, std::abs(actual - lin));
    scale = std::max(scale, std::abs(actual));
  }
  EXPECT_LE(err, 1e-9 * scale);
}

TEST(Nudge, ReducesStationResidualInMostTrials) {
  Twin f(4);
  const auto obs = f.observe(kDt, 0.005);
  int better = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> dw(4);
    qgpf::NoiseStream(100 + trial, 0).increments(0, kDt, dw);
    std::vector<double> lambda;
    const ModelState plain = qgpf::run_window(f.sm, f.s0, dw, 1);
    const ModelState nudged = qgpf::run_window(f.sm, f.s0, dw, 1, &obs, &lambda);
    ASSERT_EQ(lambda.size(), 4u);
    const double lp = qgpf::log_likelihood_weight(qgpf::project(*f.model, plain, f.stations), obs);
    const double ln = qgpf::log_likelihood_weight(qgpf::project(*f.model, nudged, f.stations), obs);
    if (ln >= lp) ++better;
  }
  EXPECT_GE(better, 90);
}

// --- propagation ---

TEST(Propagate, ZeroNoiseMatchesDeterministic) {
  Twin f(4, 0.0);
  Ensemble e = f.ensemble(1);
  qgpf::propagate(e, f.sm, 6 * kDt);
  ModelState d = f.s0;
  f.model->advance(d, 6);
  EXPECT_EQ(field_diff(e.particles[0].state, d), 0.0);
  EXPECT_EQ(e.particles[0].window_dw.size(), 24u);
  EXPECT_EQ(e.particles[0].window_start.step, f.s0.step);
}

TEST(Propagate, ReproducibleAndDistinct) {
  Twin f;
  Ensemble a = f.ensemble(4);
  Ensemble b = f.ensemble(4);
  qgpf::propagate(a, f.sm, 4 * kDt);
  qgpf::propagate(b, f.sm, 4 * kDt);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(field_diff(a.particles[i].state, b.particles[i].state), 0.0);
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_GT(field_diff(a.particles[i].state, a.particles[j].state), 0.0);
  }
}

TEST(Propagate, RejectsFractionalInterval) {
  Twin f;
  Ensemble e = f.ensemble(2);
  EXPECT_THROW(qgpf::propagate(e, f.sm, 1.5 * kDt), qgpf::InvalidArgument);
  EXPECT_THROW(qgpf::propagate(e, f.sm, 0.0), qgpf::InvalidArgument);
}

TEST(Propagate, CflFailureNamesParticle) {
  Twin f(4, 3e4);
  Ensemble e = f.ensemble(3);
  try {
    qgpf::propagate(e, f.sm, 2 * kDt);
    FAIL() << "expected a CFL failure";
  } catch (const qgpf::CflError& err) {
    EXPECT_GE(err.particle(), 0);
    EXPECT_NE(std::string(err.what()).find("particle"), std::string::npos);
  }
}

// --- MCMC ---

FilterConfig small_config(int n) {
  FilterConfig c;
  c.n = n;
  c.n_star = 0.8 * n;
  c.mcmc_iterations = 3;
  c.window = 2 * kDt;
  c.seed = 5;
  return c;
}

TEST(Jitter, ZeroIterationsLeaveEnsemble) {
  Twin f;
  Ensemble e = f.ensemble(3);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const Ensemble before = e;
  auto c = small_config(3);
  c.mcmc_iterations = 0;
  const auto obs = f.observe(2 * kDt, 0.01);
  EXPECT_EQ(qgpf::jitter_mcmc(e, obs, 1.0, c, f.sm, false, 0), 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(field_diff(e.particles[i].state, before.particles[i].state), 0.0);
}

TEST(Jitter, UnitCorrelationIsStationary) {
  Twin f;
  Ensemble e = f.ensemble(3);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const Ensemble before = e;
  auto c = small_config(3);
  c.rho = 1.0;
  const auto obs = f.observe(2 * kDt, 0.01);
  EXPECT_EQ(qgpf::jitter_mcmc(e, obs, 0.5, c, f.sm, false, 0), 1.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(field_diff(e.particles[i].state, before.particles[i].state), 0.0);
    EXPECT_EQ(e.particles[i].window_dw, before.particles[i].window_dw);
  }
}

TEST(Jitter, FlatLikelihoodAcceptsEverything) {
  Twin f;
  Ensemble e = f.ensemble(4);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const Ensemble before = e;
  auto c = small_config(4);
  c.rho = 0.9;
  const auto obs = f.observe(2 * kDt, 1e12);
  EXPECT_EQ(qgpf::jitter_mcmc(e, obs, 1.0, c, f.sm, false, 0), 1.0);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GT(field_diff(e.particles[i].state, before.particles[i].state), 0.0);
}

TEST(Jitter, FlatLikelihoodPreservesStationMarginal) {
  Twin f;
  auto c = small_config(50);
  c.rho = 0.5;  // strong moves, so invariance is not trivial
  c.mcmc_iterations = 5;
  const auto obs = f.observe(2 * kDt, 1e12);
  const auto sample = [&](std::uint64_t seed0, bool jitter) {
    std::vector<double> out;
    for (std::uint64_t b = 0; b < 4; ++b) {
      Ensemble e = f.ensemble(50, seed0 + b);
      qgpf::propagate(e, f.sm, 2 * kDt);
      if (jitter) EXPECT_EQ(qgpf::jitter_mcmc(e, obs, 1.0, c, f.sm, false, 0), 1.0);
      for (const auto& p : e.particles) out.push_back(qgpf::project(*f.model, p.state, f.stations)[5].u);
    }
    return out;
  };
  const auto fresh = sample(100, false);
  const auto moved = sample(200, true);
  ASSERT_EQ(moved.size(), 200u);
  EXPECT_GT(qgpf::ks_two_sample(fresh, moved).p_value, 0.01);
}

TEST(Jitter, SharpLikelihoodRejectsSomething) {
  Twin f;
  Ensemble e = f.ensemble(4);
  qgpf::propagate(e, f.sm, 2 * kDt);
  auto c = small_config(4);
  c.rho = 0.5;
  const auto obs = f.observe(2 * kDt, 1e-4);
  EXPECT_LT(qgpf::jitter_mcmc(e, obs, 1.0, c, f.sm, false, 0), 1.0);
}

// --- assimilation ---

TEST(Bootstrap, HighEssKeepsEnsembleAndWeights) {
  Twin f;
  Ensemble e = f.ensemble(5);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const Ensemble before = e;
  const auto obs = f.observe(2 * kDt, 1e3);
  const auto ev = qgpf::assimilate_bootstrap(e, obs, small_config(5), f.sm);
  EXPECT_FALSE(ev.resampled);
  EXPECT_GE(ev.ess_before, 4.0);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(field_diff(e.particles[i].state, before.particles[i].state), 0.0);
    EXPECT_EQ(e.particles[i].log_weight, e.particles[i].log_likelihood);
  }
}

TEST(Bootstrap, DegenerateWeightsCopyBestParticle) {
  Twin f;
  Ensemble e = f.ensemble(5);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const auto obs = f.observe(2 * kDt, 1e-7);
  std::size_t best = 0;
  double best_lw = -1e300;
  for (std::size_t i = 0; i < 5; ++i) {
    const double lw = qgpf::particle_log_weight(*f.model, e.particles[i], obs, false);
    if (lw > best_lw) {
      best_lw = lw;
      best = i;
    }
  }
  const ModelState winner = e.particles[best].state;
  const auto ev = qgpf::assimilate_bootstrap(e, obs, small_config(5), f.sm);
  EXPECT_TRUE(ev.resampled);
  for (const auto& p : e.particles) {
    EXPECT_EQ(field_diff(p.state, winner), 0.0);
    EXPECT_EQ(p.log_weight, 0.0);
  }
  // Streams stay with their slots.
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(e.particles[i].stream.stream_id(), i);
}

TEST(Tempered, HighEssSkipsTempering) {
  Twin f;
  Ensemble e = f.ensemble(5);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const Ensemble before = e;
  const auto ev = qgpf::assimilate_tempered(e, f.observe(2 * kDt, 1e3), small_config(5), f.sm);
  EXPECT_EQ(ev.p_stages, 0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(field_diff(e.particles[i].state, before.particles[i].state), 0.0);
}

TEST(Tempered, LowEssRunsStagesAndResetsWeights) {
  Twin f;
  Ensemble e = f.ensemble(6);
  qgpf::propagate(e, f.sm, 2 * kDt);
  const auto ev = qgpf::assimilate_tempered(e, f.observe(2 * kDt, 2e-3), small_config(6), f.sm);
  EXPECT_GE(ev.p_stages, 1);
  EXPECT_EQ(ev.stage_ess.size(), static_cast<std::size_t>(ev.p_stages));
  for (double s : ev.stage_ess) EXPECT_GE(s, 0.8 * 6 - 1e-9);
  for (const auto& p : e.particles) EXPECT_EQ(p.log_weight, 0.0);
  EXPECT_EQ(e.cycle, 1u);
}

TEST(Nudged, ZeroBasisEqualsTempered) {
  Twin f(4, 0.0);
  const auto obs = f.observe(2 * kDt, 2e-3);
  const auto c = small_config(4);
  Ensemble a = f.ensemble(4);
  Ensemble b = f.ensemble(4);
  const auto ea = qgpf::assimilation_cycle(a, qgpf::Algorithm::kTempered, obs, c, f.sm);
  const auto eb = qgpf::assimilation_cycle(b, qgpf::Algorithm::kNudged, obs, c, f.sm);
  EXPECT_EQ(eb.mean_abs_lambda, 0.0);
  EXPECT_EQ(ea.p_stages, eb.p_stages);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(field_diff(a.particles[i].state, b.particles[i].state), 0.0);
}

TEST(Nudged, DeterministicCycles) {
  Twin f;
  const auto c = small_config(4);
  std::vector<ObservationRecord> obs{f.observe(2 * kDt, 2e-3), f.observe(4 * kDt, 2e-3)};
  auto run = [&] {
    Ensemble e = f.ensemble(4);
    for (const auto& o : obs) (void)qgpf::assimilation_cycle(e, qgpf::Algorithm::kNudged, o, c, f.sm);
    return e;
  };
  const Ensemble a = run();
  const Ensemble b = run();
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(field_diff(a.particles[i].state, b.particles[i].state), 0.0);
    EXPECT_EQ(a.particles[i].lambda, b.particles[i].lambda);
  }
}

TEST(Free, PropagatesWithoutWeighting) {
  Twin f;
  const auto obs = f.observe(2 * kDt, 1e-6);
  Ensemble a = f.ensemble(3);
  Ensemble b = f.ensemble(3);
  (void)qgpf::assimilation_cycle(a, qgpf::Algorithm::kFree, obs, small_config(3), f.sm);
  qgpf::propagate(b, f.sm, 2 * kDt);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(field_diff(a.particles[i].state, b.particles[i].state), 0.0);
    EXPECT_EQ(a.particles[i].log_weight, 0.0);
  }
}

TEST(FilterConfig, Validation) {
  FilterConfig c;
  EXPECT_NO_THROW(c.validate());
  c.n_star = 21;
  EXPECT_THROW(c.validate(), qgpf::ConfigError);
  c = FilterConfig{};
  c.rho = 0.0;
  EXPECT_THROW(c.validate(), qgpf::ConfigError);
  c = FilterConfig{};
  c.mcmc_iterations = -1;
  EXPECT_THROW(c.validate(), qgpf::ConfigError);
  EXPECT_EQ(qgpf::parse_algorithm("nudged"), qgpf::Algorithm::kNudged);
  EXPECT_THROW(qgpf::parse_algorithm("magic"), qgpf::ConfigError);
}

}  // namespace
