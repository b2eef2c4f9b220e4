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
#include <fstream>
#include <random>
#include <vector>

#include "qgpf/observations.hpp"
#include "test_support.hpp"

namespace {

using qgpf::CellVelocity;
using qgpf::Grid;
using qgpf::LayeredField;
using qgpf::ObservationRecord;
using qgpf::StationReading;
using qgpf::testing::random_field;

ObservationRecord single_station(double u, double v, double su, double sv) {
  const Grid g(8, 8, 1.0, 1.0);
  ObservationRecord r;
  r.stations = qgpf::make_equidistant_stations(g, 1, 1);
  r.values = {{u, v}};
  r.sigma = {{su}, {sv}};
  return r;
}

TEST(Sigma, ConstantCellGivesFloor) {
  const Grid fine(16, 8, 1.0, 1.0);
  const Grid coarse(8, 4, 1.0, 1.0);
  const CellVelocity v{LayeredField(fine, 0.2), LayeredField(fine, -0.1)};
  const auto st = qgpf::make_equidistant_stations(coarse, 2, 2);
  const auto s = qgpf::compute_sigma(v, coarse, st);
  for (std::size_t i = 0; i < st.size(); ++i) {
    EXPECT_EQ(s.u[i], qgpf::kSigmaFloor);
    EXPECT_EQ(s.v[i], qgpf::kSigmaFloor);
  }
}

TEST(Sigma, TwoValueCell) {
  const Grid fine(16, 8, 1.0, 1.0);
  const Grid coarse(8, 4, 1.0, 1.0);
  CellVelocity v{LayeredField(fine), LayeredField(fine)};
  const auto st = qgpf::make_equidistant_stations(coarse, 1, 1);
  const auto& s0 = st[0];
  // Half of the 2 x 2 block at 1, half at 3.
  for (int j = 2 * s0.j; j < 2 * s0.j + 2; ++j) {
    v.u.at(0, 2 * s0.i, j) = 1.0;
    v.u.at(0, 2 * s0.i + 1, j) = 3.0;
  }
  const auto s = qgpf::compute_sigma(v, coarse, st);
  EXPECT_DOUBLE_EQ(s.u[0], 1.0);
  EXPECT_EQ(s.v[0], qgpf::kSigmaFloor);
}

TEST(Sigma, IgnoresValuesOutsideTheCell) {
  const Grid fine(16, 8, 1.0, 1.0);
  const Grid coarse(8, 4, 1.0, 1.0);
  const auto st = qgpf::make_equidistant_stations(coarse, 1, 1);
  CellVelocity a{random_field(fine, 1), random_field(fine, 2)};
  CellVelocity b{random_field(fine, 3), random_field(fine, 4)};
  const auto& s0 = st[0];
  for (int l = 0; l < 2; ++l) {
    for (int j = 2 * s0.j; j < 2 * s0.j + 2; ++j) {
      for (int i = 2 * s0.i; i < 2 * s0.i + 2; ++i) {
        b.u.at(l, i, j) = a.u.at(l, i, j);
        b.v.at(l, i, j) = a.v.at(l, i, j);
      }
    }
  }
  const auto sa = qgpf::compute_sigma(a, coarse, st);
  const auto sb = qgpf::compute_sigma(b, coarse, st);
  EXPECT_EQ(sa.u[0], sb.u[0]);
  EXPECT_EQ(sa.v[0], sb.v[0]);
}

TEST(Sigma, RejectsNonDivisibleGrids) {
  const Grid fine(15, 8, 1.0, 1.0);
  const Grid coarse(8, 4, 1.0, 1.0);
  const CellVelocity v{LayeredField(fine), LayeredField(fine)};
  EXPECT_THROW(qgpf::compute_sigma(v, coarse, qgpf::make_equidistant_stations(coarse, 1, 1)), qgpf::InvalidArgument);
}

TEST(Sigma, TemporalFallback) {
  std::vector<std::vector<StationReading>> series = {{{1.0, 5.0}}, {{3.0, 5.0}}};
  const auto s = qgpf::temporal_sigma(series);
  EXPECT_DOUBLE_EQ(s.u[0], 1.0);
  EXPECT_EQ(s.v[0], qgpf::kSigmaFloor);
}

TEST(ObserveTruth, FloorSigmaReproducesTruth) {
  const Grid g(16, 8, 1.0, 1.0);
  const CellVelocity v{random_field(g, 1), random_field(g, 2)};
  const auto st = qgpf::make_equidistant_stations(g, 2, 2);
  const qgpf::StationSigma sigma{std::vector<double>(4, qgpf::kSigmaFloor), std::vector<double>(4, qgpf::kSigmaFloor)};
  const auto rec = qgpf::observe_truth(v, st, sigma, qgpf::NoiseStream(1, 0), 0, 10.0);
  const auto truth = qgpf::sample_at_stations(v, st);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(rec.values[i].u, truth[i].u, 1e-5);
    EXPECT_NEAR(rec.values[i].v, truth[i].v, 1e-5);
  }
  EXPECT_EQ(rec.time, 10.0);
}

TEST(ObserveTruth, DeterministicPerSeedAndCycle) {
  const std::vector<StationReading> truth(3, {0.1, 0.2});
  const auto st = qgpf::make_equidistant_stations(Grid(8, 8, 1, 1), 1, 3);
  const qgpf::StationSigma sigma{{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}};
  const auto a = qgpf::observe_truth(truth, st, sigma, qgpf::NoiseStream(9, 0), 4, 0.0);
  const auto b = qgpf::observe_truth(truth, st, sigma, qgpf::NoiseStream(9, 0), 4, 0.0);
  const auto c = qgpf::observe_truth(truth, st, sigma, qgpf::NoiseStream(9, 0), 5, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.values[i].u, b.values[i].u);
    EXPECT_EQ(a.values[i].v, b.values[i].v);
    EXPECT_NE(a.values[i].u, c.values[i].u);
  }
}

TEST(ObserveTruth, NoiseIsStandardizedNormal) {
  const std::vector<StationReading> truth(1, {0.5, -0.5});
  const auto st = qgpf::make_equidistant_stations(Grid(8, 8, 1, 1), 1, 1);
  const qgpf::StationSigma sigma{{0.3}, {0.7}};
  const qgpf::NoiseStream stream(2024, 0);
  const int n = 10000;
  double s = 0.0;
  double s2 = 0.0;
  for (int c = 0; c < n; ++c) {
    const auto r = qgpf::observe_truth(truth, st, sigma, stream, static_cast<std::uint64_t>(c), 0.0);
    const double z = (r.values[0].u - 0.5) / 0.3;
    s += z;
    s2 += z * z;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Likelihood, PerfectMatchIsZero) {
  const auto obs = single_station(0.3, -0.2, 0.1, 0.1);
  EXPECT_EQ(qgpf::log_likelihood_weight({{0.3, -0.2}}, obs), 0.0);
}

TEST(Likelihood, OneSigmaMissInOneComponent) {
  const auto obs = single_station(0.3, -0.2, 0.1, 0.5);
  const double lw = qgpf::log_likelihood_weight({{0.4, -0.2}}, obs);
  EXPECT_NEAR(lw, -0.5, 1e-14);
  EXPECT_NEAR(std::exp(lw), 0.6065306597126334, 1e-14);
  // Both components enter.
  EXPECT_NEAR(qgpf::log_likelihood_weight({{0.4, 0.3}}, obs), -1.0, 1e-14);
}

TEST(Likelihood, PerfectExtraStationLeavesWeight) {
  const Grid g(8, 8, 1.0, 1.0);
  ObservationRecord two;
  two.stations = qgpf::make_equidistant_stations(g, 1, 2);
  two.values = {{0.3, -0.2}, {1.0, 1.0}};
  two.sigma = {{0.1, 0.2}, {0.1, 0.2}};
  ObservationRecord one = single_station(0.3, -0.2, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(qgpf::log_likelihood_weight({{0.37, -0.1}, {1.0, 1.0}}, two),
                   qgpf::log_likelihood_weight({{0.37, -0.1}}, one));
}

TEST(Likelihood, SizeMismatchThrows) {
  const auto obs = single_station(0.0, 0.0, 1.0, 1.0);
  EXPECT_THROW((void)qgpf::log_likelihood_weight({{0, 0}, {0, 0}}, obs), qgpf::InvalidArgument);
}

TEST(Girsanov, ZeroLambdaIsLikelihood) {
  const auto obs = single_station(0.3, -0.2, 0.1, 0.1);
  const std::vector<StationReading> x{{0.1, 0.0}};
  const std::vector<double> lam(3, 0.0);
  const std::vector<double> dw{0.4, -1.0, 2.0};
  EXPECT_EQ(qgpf::log_girsanov_weight(x, obs, lam, dw, 7.0), qgpf::log_likelihood_weight(x, obs));
}

TEST(Girsanov, ScalarCorrections) {
  const auto obs = single_station(0.0, 0.0, 1.0, 1.0);
  const std::vector<StationReading> x{{0.0, 0.0}};
  const std::vector<double> one{1.0};
  const std::vector<double> zero{0.0};
  EXPECT_DOUBLE_EQ(qgpf::log_girsanov_weight(x, obs, one, zero, 1.0), -0.5);
  EXPECT_DOUBLE_EQ(qgpf::log_girsanov_weight(x, obs, one, one, 1.0), 0.5);
  const std::vector<double> two{1.0, 1.0};
  EXPECT_THROW((void)qgpf::log_girsanov_weight(x, obs, one, two, 1.0), qgpf::InvalidArgument);
}

TEST(Ess, Examples) {
  EXPECT_NEAR(qgpf::ess(std::vector<double>(100, 0.37)), 100.0, 1e-12);
  std::vector<double> one(50, 0.0);
  one[17] = 3.0;
  EXPECT_NEAR(qgpf::ess(one), 1.0, 1e-12);
  EXPECT_NEAR(qgpf::ess(std::vector<double>{2, 1, 1}), 8.0 / 3.0, 1e-12);
  EXPECT_THROW((void)qgpf::ess(std::vector<double>(4, 0.0)), qgpf::InvalidArgument);
  EXPECT_THROW((void)qgpf::ess(std::vector<double>{1.0, -1.0}), qgpf::InvalidArgument);
}

TEST(Ess, ScaleInvariantAndBounded) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> w(1 + t % 37);
    for (double& x : w) x = d(rng);
    const double e = qgpf::ess(w);
    EXPECT_GE(e, 1.0 - 1e-12);
    EXPECT_LE(e, static_cast<double>(w.size()) + 1e-12);
    std::vector<double> cw = w;
    for (double& x : cw) x *= 1e-200;
    EXPECT_NEAR(qgpf::ess(cw), e, 1e-10 * e);
  }
}

TEST(Ess, TemperedMonotoneInExponent) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d(0.0, 30.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> lw(40);
    for (double& x : lw) x = d(rng);
    double prev = 1e300;
    for (int k = 1; k <= 100; ++k) {
      const double e = qgpf::weigh(lw, k / 100.0).ess;
      EXPECT_LE(e, prev * (1 + 1e-12));
      prev = e;
    }
  }
}

TEST(Weigh, NormalizesFarLogWeights) {
  const std::vector<double> lw{-1e5, -1e5 - 1.0, -2e6};
  const auto r = qgpf::weigh(lw);
  double s = 0.0;
  for (double w : r.normalized) s += w;
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(r.normalized[0] / r.normalized[1], std::exp(1.0), 1e-12);
  EXPECT_EQ(r.normalized[2], 0.0);
  EXPECT_GE(r.ess, 1.0);
  EXPECT_LE(r.ess, 3.0);
}

TEST(ObservationCsv, RoundTrip) {
  const Grid g(16, 8, 3840e3, 1920e3);
  const auto st = qgpf::make_equidistant_stations(g, 2, 4);
  const CellVelocity v{random_field(g, 8, 0.3), random_field(g, 9, 0.3)};
  qgpf::StationSigma sigma{std::vector<double>(8, 0.01), std::vector<double>(8, 0.02)};
  sigma.u[3] = 1.0 / 3.0;
  std::vector<ObservationRecord> recs;
  for (int c = 0; c < 3; ++c) {
    recs.push_back(qgpf::observe_truth(v, st, sigma, qgpf::NoiseStream(1, 1), c, 14400.0 * (c + 1), "temporal"));
  }
  const auto path = qgpf::testing::temp_dir("obs_csv") / "obs.csv";
  qgpf::write_observations_csv(path, recs);
  const auto back = qgpf::read_observations_csv(path, g);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(back[c].time, recs[c].time);
    EXPECT_EQ(back[c].provenance, "temporal");
    for (std::size_t i = 0; i < st.size(); ++i) {
      EXPECT_EQ(back[c].stations[i].i, st[i].i);
      EXPECT_EQ(back[c].stations[i].j, st[i].j);
      EXPECT_EQ(back[c].values[i].u, recs[c].values[i].u);
      EXPECT_EQ(back[c].values[i].v, recs[c].values[i].v);
      EXPECT_EQ(back[c].sigma.u[i], recs[c].sigma.u[i]);
      EXPECT_EQ(back[c].sigma.v[i], recs[c].sigma.v[i]);
    }
  }
}

TEST(ObservationCsv, RejectsBadInput) {
  const Grid g(16, 8, 1.0, 1.0);
  const auto dir = qgpf::testing::temp_dir("obs_csv_bad");
  {
    std::ofstream(dir / "a.csv") << "time,station\n";
  }
  EXPECT_THROW(qgpf::read_observations_csv(dir / "a.csv", g), qgpf::FormatError);
  {
    std::ofstream(dir / "b.csv") << "time_s,station_id,x_m,y_m,u_obs,v_obs,sigma_u,sigma_v\n0,0,0.5,0.5,x,0,1,1\n";
  }
  try {
    (void)qgpf::read_observations_csv(dir / "b.csv", g);
    FAIL() << "expected FormatError";
  } catch (const qgpf::FormatError& e) {
    EXPECT_EQ(e.byte_offset(), 54u);  // start of the first data row
  }
  {
    std::ofstream(dir / "c.csv") << "time_s,station_id,x_m,y_m,u_obs,v_obs,sigma_u,sigma_v\n0,0,0.5,0.5,0,0,0,1\n";
  }
  EXPECT_THROW(qgpf::read_observations_csv(dir / "c.csv", g), qgpf::InvalidArgument);
  EXPECT_THROW(qgpf::read_observations_csv(dir / "missing.csv", g), qgpf::FormatError);
}

}  // namespace
