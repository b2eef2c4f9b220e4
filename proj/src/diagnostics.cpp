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

#include "qgpf/diagnostics.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "qgpf/noise.hpp"
#include "qgpf/stochastic.hpp"
#include "qgpf/xi.hpp"

namespace qgpf {

namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double truth_norm(std::span<const double> truth) {
  const double n = norm2(truth);
  if (!(n > 0.0)) throw InvalidArgument("truth has zero norm");
  return n;
}

void check_members(std::span<const double> truth, const std::vector<std::vector<double>>& members) {
  if (members.empty()) throw InvalidArgument("empty ensemble");
  for (const auto& m : members) {
    if (m.size() != truth.size()) throw InvalidArgument("member and truth sizes differ");
  }
}

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace

std::string to_string(MetricMode m) { return m == MetricMode::kStations ? "stations" : "domain"; }

std::vector<double> flatten(const std::vector<StationReading>& readings) {
  std::vector<double> out;
  out.reserve(2 * readings.size());
  for (const auto& r : readings) {
    out.push_back(r.u);
    out.push_back(r.v);
  }
  return out;
}

std::vector<double> flatten_domain(const CellVelocity& velocity) {
  std::vector<double> out(velocity.u.layer(0).begin(), velocity.u.layer(0).end());
  out.insert(out.end(), velocity.v.layer(0).begin(), velocity.v.layer(0).end());
  return out;
}

double relative_bias(std::span<const double> truth, const std::vector<std::vector<double>>& members) {
  check_members(truth, members);
  const double n = truth_norm(truth);
  std::vector<double> d(truth.size());
  const double inv = 1.0 / static_cast<double>(members.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double mean = 0.0;
    for (const auto& m : members) mean += m[i];
    d[i] = truth[i] - mean * inv;
  }
  return norm2(d) / n;
}

double ensemble_mean_error(std::span<const double> truth, const std::vector<std::vector<double>>& members) {
  check_members(truth, members);
  const double n = truth_norm(truth);
  double s = 0.0;
  std::vector<double> d(truth.size());
  for (const auto& m : members) {
    for (std::size_t i = 0; i < truth.size(); ++i) d[i] = truth[i] - m[i];
    s += norm2(d) / n;
  }
  return s / static_cast<double>(members.size());
}

int rank_of_truth(double truth, std::span<const double> members, double u) {
  if (members.empty()) throw InvalidArgument("rank needs at least one member");
  int below = 0;
  int ties = 0;
  for (double m : members) {
    if (m < truth) ++below;
    else if (m == truth) ++ties;
  }
  const int share = std::min(ties, static_cast<int>(std::floor(u * (ties + 1))));
  return below + share;
}

void RankHistogram::add(int rank) {
  if (rank < 0 || rank >= static_cast<int>(counts_.size())) throw InvalidArgument("rank outside histogram");
  ++counts_[static_cast<std::size_t>(rank)];
  ++samples_;
}

double RankHistogram::chi_square() const {
  if (samples_ == 0) return 0.0;
  const double e = static_cast<double>(samples_) / static_cast<double>(counts_.size());
  double s = 0.0;
  for (long c : counts_) s += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  return s;
}

double RankHistogram::p_value() const {
  if (counts_.size() < 2 || samples_ == 0) return 1.0;
  const boost::math::chi_squared dist(static_cast<double>(counts_.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi_square()));
}

double kolmogorov_survival(double t) {
  if (t <= 0.0) return 1.0;
  // The alternating series converges fast for t > ~0.3; below that Q is 1 to double precision.
  if (t < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d);
  return r;
}

Spread spread_of(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("spread of an empty ensemble");
  std::sort(values.begin(), values.end());
  Spread s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / n);
  s.min = values.front();
  s.max = values.back();
  s.q05 = quantile_sorted(values, 0.05);
  s.q95 = quantile_sorted(values, 0.95);
  return s;
}

void MetricSeries::push(double time, double value) {
  if (!times.empty() && !(time > times.back())) throw InvalidArgument("metric times must increase");
  if (!std::isfinite(value)) throw NumericalError("non-finite value for metric " + metric);
  times.push_back(time);
  values.push_back(value);
}

double MetricSeries::mean() const { return mean_since(-INFINITY); }

double MetricSeries::mean_since(double t0) const {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= t0) {
      s += values[i];
      ++n;
    }
  }
  return n > 0 ? s / n : 0.0;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricSeries>& series) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "time_s,metric,mode,value\n";
  char buf[128];
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.times.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.times[i]);
      out << buf << ',' << s.metric << ',' << to_string(s.mode) << ',';
      std::snprintf(buf, sizeof buf, "%.17g", s.values[i]);
      out << buf << '\n';
    }
  }
}

void write_rank_csv(const std::filesystem::path& path, const RankHistogram& h) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "bin,count\n";
  for (std::size_t i = 0; i < h.counts().size(); ++i) out << i << ',' << h.counts()[i] << '\n';
}

std::vector<MetricSeries> conservation_report(const std::vector<ModelState>& trajectory) {
  std::vector<MetricSeries> out;
  if (trajectory.empty()) return out;
  const Grid& g = trajectory.front().q.grid();
  const double area = g.cell_area();
  for (int l = 0; l < kLayers; ++l) {
    const auto integrals = [&](const ModelState& s) {
      double q = 0.0;
      double q2 = 0.0;
      double aq = 0.0;
      for (double x : s.q.layer(l)) {
        q += x;
        q2 += x * x;
        aq += std::abs(x);
      }
      return std::array<double, 3>{q * area, q2 * area, aq * area};
    };
    const auto i0 = integrals(trajectory.front());
    const double ref_q = std::max(std::abs(i0[0]), i0[2]);
    const double ref_q2 = i0[1];
    MetricSeries mq{"pv_integral_drift_layer" + std::to_string(l + 1), MetricMode::kDomain, {}, {}};
    MetricSeries mq2{"enstrophy_drift_layer" + std::to_string(l + 1), MetricMode::kDomain, {}, {}};
    for (const auto& s : trajectory) {
      const auto i = integrals(s);
      mq.push(s.time, ref_q > 0.0 ? (i[0] - i0[0]) / ref_q : 0.0);
      mq2.push(s.time, ref_q2 > 0.0 ? (i[1] - i0[1]) / ref_q2 : 0.0);
    }
    out.push_back(std::move(mq));
    out.push_back(std::move(mq2));
  }
  return out;
}

double fit_order(std::span<const double> dt, std::span<const double> err) {
  if (dt.size() != err.size() || dt.size() < 2) throw InvalidArgument("order fit needs two or more matched points");
  double sx = 0.0;
  double sy = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  const double n = static_cast<double>(dt.size());
  for (std::size_t i = 0; i < dt.size(); ++i) {
    if (!(dt[i] > 0.0) || !(err[i] > 0.0)) throw InvalidArgument("order fit needs positive values");
    const double x = std::log(dt[i]);
    const double y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ConvergenceResult convergence_study(const ConvergenceSetup& setup) {
  if (setup.levels < 3) throw InvalidArgument("convergence study needs at least three levels");
  if (!setup.psi0) throw InvalidArgument("convergence study needs an initial stream function");
  const Grid& g0 = setup.base_grid;
  const int k = setup.k_modes;
  const NoiseStream stream(setup.noise_seed, 0);

  // Level-0 increments, then successive bridge refinements.
  std::vector<double> dw(static_cast<std::size_t>(setup.base_steps) * k);
  for (long n = 0; n < setup.base_steps; ++n) {
    stream.increments(static_cast<std::uint64_t>(n), setup.params.dt,
                      std::span<double>(dw).subspan(static_cast<std::size_t>(n) * k, static_cast<std::size_t>(k)));
  }
  if (!setup.noise) std::fill(dw.begin(), dw.end(), 0.0);

  std::vector<LayeredField> finals;
  std::vector<double> dts;
  double h = setup.params.dt;
  for (int lev = 0; lev < setup.levels; ++lev) {
    const int f = 1 << lev;
    const Grid g(g0.nx() * f, g0.ny() * f, g0.lx(), g0.ly());
    ModelParams p = setup.params;
    p.dt = h;
    auto model = std::make_shared<const Model>(g, p, std::make_shared<const EllipticWorkspace>(g, setup.strat));
    auto xi = std::make_shared<const XiBasis>(
        synthesize_xi(g, k, setup.xi_spectrum, setup.xi_seed, setup.noise ? setup.xi_amplitude : 0.0));
    const StochasticModel sm(model, xi);
    LayeredField psi(g);
    for (int l = 0; l < kLayers; ++l) {
      for (int j = 0; j < g.ny(); ++j) {
        for (int i = 0; i < g.nx(); ++i) psi.at(l, i, j) = setup.psi0(l, g.x_center(i), g.y_center(j));
      }
    }
    ModelState s = model->state_from_psi(psi, {0.0, 0.0});
    const long steps = setup.base_steps * f;
    for (long n = 0; n < steps; ++n) {
      sm.step(s, std::span<const double>(dw).subspan(static_cast<std::size_t>(n) * k, static_cast<std::size_t>(k)));
    }
    finals.push_back(coarse_grain(model->anomaly(s), g0));
    dts.push_back(h);
    if (lev + 1 < setup.levels) {
      dw = setup.noise ? bridge_refine(dw, k, h, stream, static_cast<std::uint32_t>(lev + 1))
                       : std::vector<double>(2 * dw.size(), 0.0);
      h *= 0.5;
    }
  }

  ConvergenceResult r;
  const LayeredField& ref = finals.back();
  for (int lev = 0; lev + 1 < setup.levels; ++lev) {
    double ss = 0.0;
    for (std::size_t c = 0; c < ref.values().size(); ++c) {
      const double d = finals[static_cast<std::size_t>(lev)].values()[c] - ref.values()[c];
      ss += d * d;
    }
    r.dt.push_back(dts[static_cast<std::size_t>(lev)]);
    r.errors.push_back(std::sqrt(ss / static_cast<double>(ref.values().size())));
  }
  r.order = fit_order(r.dt, r.errors);
  return r;
}

}  // namespace qgpf
