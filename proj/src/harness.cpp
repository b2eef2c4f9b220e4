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

#include "qgpf/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "qgpf/snapshot.hpp"

namespace qgpf {
namespace {

// Stream ids under the experiment seed; particles use 0 .. N-1.
constexpr std::uint64_t kSpinupStreamId = 0x5B1A0000;
constexpr std::uint64_t kObservationStreamId = 0x0B5E0000;
constexpr std::uint64_t kRankStreamId = 0x4A4B0000;

bool is_multiple(double a, double b) {
  if (!(a >= 0.0) || !(b > 0.0)) return false;
  const double r = a / b;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

long ratio_of(double a, double b) { return std::lround(a / b); }

// ---------------------------------------------------------------------------------------------
// INI parsing

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("cannot parse " + key + " = '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("cannot parse " + key + " = '" + text + "' as a boolean");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(parse_number<int>(key, item));
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

template <typename T>
Key number_key(const std::string& name, T ExperimentConfig::*member) {
  return {[name, member](ExperimentConfig& c, const std::string& v) { c.*member = parse_number<T>(name, v); },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

template <typename T, typename S>
Key nested_key(const std::string& name, S ExperimentConfig::*outer, T S::*member) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*outer).*member = parse_number<T>(name, v); },
          [=](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt_double((c.*outer).*member);
            } else {
              return std::to_string((c.*outer).*member);
            }
          }};
}

const std::map<std::string, std::map<std::string, Key>>& schema() {
  using C = ExperimentConfig;
  static const std::map<std::string, std::map<std::string, Key>> s = {
      {"domain", {{"lx_m", number_key("lx_m", &C::lx_m)}, {"ly_m", number_key("ly_m", &C::ly_m)}}},
      {"physics",
       {{"beta_per_m_s", number_key("beta_per_m_s", &C::beta_per_m_s)},
        {"nu_m2_per_s", number_key("nu_m2_per_s", &C::nu_m2_per_s)},
        {"mu_per_s", number_key("mu_per_s", &C::mu_per_s)},
        {"u1_m_per_s",
         {[](C& c, const std::string& v) { c.u_m_per_s[0] = parse_number<double>("u1_m_per_s", v); },
          [](const C& c) { return fmt_double(c.u_m_per_s[0]); }}},
        {"u2_m_per_s",
         {[](C& c, const std::string& v) { c.u_m_per_s[1] = parse_number<double>("u2_m_per_s", v); },
          [](const C& c) { return fmt_double(c.u_m_per_s[1]); }}},
        {"s1_per_m2", number_key("s1_per_m2", &C::s1_per_m2)},
        {"s2_per_m2", number_key("s2_per_m2", &C::s2_per_m2)},
        {"max_courant", number_key("max_courant", &C::max_courant)}}},
      {"grids",
       {{"truth_nx", number_key("truth_nx", &C::truth_nx)},
        {"truth_ny", number_key("truth_ny", &C::truth_ny)},
        {"signal_nx", number_key("signal_nx", &C::signal_nx)},
        {"signal_ny", number_key("signal_ny", &C::signal_ny)},
        {"truth_dt_s", number_key("truth_dt_s", &C::truth_dt_s)},
        {"signal_dt_s", number_key("signal_dt_s", &C::signal_dt_s)},
        {"station_rows", number_key("station_rows", &C::station_rows)},
        {"station_cols", number_key("station_cols", &C::station_cols)},
        {"rank_stations",
         {[](C& c, const std::string& v) { c.rank_stations = parse_int_list("rank_stations", v); },
          [](const C& c) {
            std::string out;
            for (std::size_t i = 0; i < c.rank_stations.size(); ++i) {
              out += (i ? "," : "") + std::to_string(c.rank_stations[i]);
            }
            return out;
          }}}}},
      {"noise",
       {{"k_modes", number_key("k_modes", &C::k_modes)},
        {"xi_file",
         {[](C& c, const std::string& v) { c.xi_file = v; }, [](const C& c) { return c.xi_file; }}},
        {"xi_amplitude_m_per_sqrt_s", number_key("xi_amplitude_m_per_sqrt_s", &C::xi_amplitude_m_per_sqrt_s)},
        {"xi_spectrum", number_key("xi_spectrum", &C::xi_spectrum)},
        {"xi_seed", number_key("xi_seed", &C::xi_seed)}}},
      {"filter",
       {{"algorithm",
         {[](C& c, const std::string& v) { c.algorithm = parse_algorithm(v); },
          [](const C& c) { return to_string(c.algorithm); }}},
        {"particles", nested_key("particles", &C::filter, &FilterConfig::n)},
        {"ess_threshold", nested_key("ess_threshold", &C::filter, &FilterConfig::n_star)},
        {"jitter_rho", nested_key("jitter_rho", &C::filter, &FilterConfig::rho)},
        {"mcmc_iterations", nested_key("mcmc_iterations", &C::filter, &FilterConfig::mcmc_iterations)},
        {"da_interval_s", nested_key("da_interval_s", &C::filter, &FilterConfig::window)},
        {"tempering",
         {[](C& c, const std::string& v) {
            if (v == "incremental") {
              c.filter.tempering = TemperingMode::kIncremental;
            } else if (v == "literal") {
              c.filter.tempering = TemperingMode::kLiteral;
            } else {
              throw ConfigError("tempering must be incremental or literal, got '" + v + "'");
            }
          },
          [](const C& c) {
            return std::string(c.filter.tempering == TemperingMode::kIncremental ? "incremental" : "literal");
          }}},
        {"renudge_proposals",
         {[](C& c, const std::string& v) { c.filter.renudge_proposals = parse_bool("renudge_proposals", v); },
          [](const C& c) { return std::string(c.filter.renudge_proposals ? "true" : "false"); }}},
        {"girsanov_in_mcmc",
         {[](C& c, const std::string& v) { c.filter.girsanov_in_mcmc = parse_bool("girsanov_in_mcmc", v); },
          [](const C& c) { return std::string(c.filter.girsanov_in_mcmc ? "true" : "false"); }}}}},
      {"run",
       {{"seed", number_key("seed", &C::seed)},
        {"spinup_s", number_key("spinup_s", &C::spinup_s)},
        {"spinup_perturbation_m2_per_s",
         number_key("spinup_perturbation_m2_per_s", &C::spinup_perturbation_m2_per_s)},
        {"ensemble_spinup_s", number_key("ensemble_spinup_s", &C::ensemble_spinup_s)},
        {"assimilation_s", number_key("assimilation_s", &C::assimilation_s)},
        {"output_dir",
         {[](C& c, const std::string& v) { c.output_dir = v; },
          [](const C& c) { return c.output_dir.string(); }}}}},
      {"convergence",
       {{"base_nx", nested_key("base_nx", &C::convergence, &ConvergenceConfig::base_nx)},
        {"base_ny", nested_key("base_ny", &C::convergence, &ConvergenceConfig::base_ny)},
        {"base_dt_s", nested_key("base_dt_s", &C::convergence, &ConvergenceConfig::base_dt_s)},
        {"base_steps", nested_key("base_steps", &C::convergence, &ConvergenceConfig::base_steps)},
        {"levels", nested_key("levels", &C::convergence, &ConvergenceConfig::levels)},
        {"k_modes", nested_key("k_modes", &C::convergence, &ConvergenceConfig::k_modes)},
        {"xi_amplitude_m_per_sqrt_s",
         nested_key("xi_amplitude_m_per_sqrt_s", &C::convergence, &ConvergenceConfig::xi_amplitude_m_per_sqrt_s)},
        {"psi_amplitude_m2_per_s",
         nested_key("psi_amplitude_m2_per_s", &C::convergence, &ConvergenceConfig::psi_amplitude_m2_per_s)}}},
  };
  return s;
}

// ---------------------------------------------------------------------------------------------

/// Stream-function perturbation on the lowest 3 x 3 channel modes of each layer.
LayeredField channel_perturbation(const Grid& g, const NoiseStream& stream, double amplitude) {
  LayeredField psi(g);
  std::uint64_t index = 0;
  for (int l = 0; l < kLayers; ++l) {
    for (int m = 0; m <= 3; ++m) {
      for (int n = 1; n <= 3; ++n, ++index) {
        const double a = (2.0 * stream.uniform(Channel::kInitial, index, 0) - 1.0) * amplitude / (1.0 + m * m + n * n);
        const double ph = std::numbers::pi * (2.0 * stream.uniform(Channel::kInitial, index, 1) - 1.0);
        for (int j = 0; j < g.ny(); ++j) {
          const double sy = std::sin(std::numbers::pi * n * g.y_center(j) / g.ly());
          for (int i = 0; i < g.nx(); ++i) {
            psi.at(l, i, j) += a * sy * std::cos(2.0 * std::numbers::pi * m * g.x_center(i) / g.lx() + ph);
          }
        }
      }
    }
  }
  return psi;
}

std::string particle_file(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "particle_%03zu.qgs", n);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Configuration

int ExperimentConfig::cycles() const { return static_cast<int>(ratio_of(assimilation_s, da_interval_s())); }

Grid ExperimentConfig::truth_grid() const { return Grid(truth_nx, truth_ny, lx_m, ly_m); }
Grid ExperimentConfig::signal_grid() const { return Grid(signal_nx, signal_ny, lx_m, ly_m); }

ModelParams ExperimentConfig::model_params(double dt) const {
  ModelParams p;
  p.beta = beta_per_m_s;
  p.nu = nu_m2_per_s;
  p.mu = mu_per_s;
  p.background_u = u_m_per_s;
  p.dt = dt;
  p.max_courant = max_courant;
  return p;
}

void ExperimentConfig::validate() const {
  try {
    if (!(lx_m > 0.0) || !(ly_m > 0.0)) throw ConfigError("domain lengths must be positive");
    if (!(s1_per_m2 > 0.0) || !(s2_per_m2 > 0.0)) throw ConfigError("s1 and s2 must be positive");
    if (truth_nx < 2 || truth_ny < 2 || signal_nx < 2 || signal_ny < 2) throw ConfigError("grids need >= 2 cells");
    if (truth_nx % signal_nx != 0 || truth_ny % signal_ny != 0) {
      throw ConfigError("truth grid must be an integer multiple of the signal grid");
    }
    model_params(truth_dt_s).validate();
    model_params(signal_dt_s).validate();
    if (!is_multiple(signal_dt_s, truth_dt_s)) throw ConfigError("signal_dt_s must be a multiple of truth_dt_s");
    if (!is_multiple(da_interval_s(), signal_dt_s)) throw ConfigError("da_interval_s must be a multiple of signal_dt_s");
    if (!is_multiple(assimilation_s, da_interval_s()) || cycles() < 1) {
      throw ConfigError("assimilation_s must be a positive multiple of da_interval_s");
    }
    if (!is_multiple(ensemble_spinup_s, signal_dt_s)) {
      throw ConfigError("ensemble_spinup_s must be a non-negative multiple of signal_dt_s");
    }
    if (!is_multiple(spinup_s, truth_dt_s)) throw ConfigError("spinup_s must be a non-negative multiple of truth_dt_s");
    if (station_rows < 1 || station_cols < 1) throw ConfigError("station layout needs >= 1 row and column");
    const int m = station_rows * station_cols;
    for (int r : rank_stations) {
      if (r < 0 || r >= m) throw ConfigError("rank station " + std::to_string(r) + " out of range");
    }
    if (k_modes < 1) throw ConfigError("k_modes must be >= 1");
    if (xi_file.empty() && k_modes > available_xi_modes(signal_grid())) {
      throw ConfigError("k_modes exceeds the modes the signal grid can hold");
    }
    if (!(xi_amplitude_m_per_sqrt_s >= 0.0)) throw ConfigError("xi amplitude must be >= 0");
    if (!(spinup_perturbation_m2_per_s >= 0.0)) throw ConfigError("spin-up perturbation must be >= 0");
    filter.validate();
    if (convergence.levels < 3 || convergence.base_steps < 1) throw ConfigError("convergence needs >= 3 levels");
    if (convergence.k_modes < 1 ||
        convergence.k_modes > available_xi_modes(Grid(convergence.base_nx, convergence.base_ny, lx_m, ly_m))) {
      throw ConfigError("convergence k_modes exceeds the modes the base grid can hold");
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig c;
  const auto& keys = schema();
  for (const auto& [section, body] : tree) {
    const auto sec = keys.find(section);
    if (sec == keys.end()) throw ConfigError("unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [name, value] : body) {
      const auto key = sec->second.find(name);
      if (key == sec->second.end()) throw ConfigError("unknown key '" + name + "' in [" + section + "]");
      key->second.set(c, value.data());
    }
  }
  c.filter.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  static const char* order[] = {"domain", "physics", "grids", "noise", "filter", "run", "convergence"};
  const auto& keys = schema();
  for (const char* section : order) {
    out << '[' << section << "]\n";
    for (const auto& [name, key] : keys.at(section)) out << name << " = " << key.get(config) << '\n';
    out << '\n';
  }
}

// ---------------------------------------------------------------------------------------------
// Experiment pieces

ConvergenceSetup make_convergence_setup(const ExperimentConfig& config, bool noise) {
  const auto& cc = config.convergence;
  ConvergenceSetup s{Grid(cc.base_nx, cc.base_ny, config.lx_m, config.ly_m), config.model_params(cc.base_dt_s),
                     config.strat(), nullptr};
  const double a = cc.psi_amplitude_m2_per_s;
  const double lx = config.lx_m;
  const double ly = config.ly_m;
  s.psi0 = [a, lx, ly](int l, double x, double y) {
    const double amp = l == 0 ? a : a / 3.0;
    return amp * std::sin(std::numbers::pi * y / ly) * std::cos(2 * std::numbers::pi * x / lx) +
           0.5 * amp * std::sin(2 * std::numbers::pi * y / ly) * std::sin(4 * std::numbers::pi * x / lx);
  };
  s.k_modes = cc.k_modes;
  s.xi_amplitude = cc.xi_amplitude_m_per_sqrt_s;
  s.xi_spectrum = config.xi_spectrum;
  s.xi_seed = config.xi_seed;
  s.noise_seed = config.seed;
  s.noise = noise;
  s.levels = cc.levels;
  s.base_steps = cc.base_steps;
  return s;
}

XiBasis make_xi(const ExperimentConfig& config) {
  const Grid g = config.signal_grid();
  if (!config.xi_file.empty()) {
    XiBasis xi = load_xi(config.xi_file, g);
    if (xi.size() != config.k_modes) {
      throw ConfigError("xi file holds " + std::to_string(xi.size()) + " modes, config asks for " +
                        std::to_string(config.k_modes));
    }
    return xi;
  }
  return synthesize_xi(g, config.k_modes, config.xi_spectrum, config.xi_seed, config.xi_amplitude_m_per_sqrt_s);
}

Experiment make_experiment(const ExperimentConfig& config) {
  config.validate();
  Experiment ex;
  ex.config = config;
  ex.config.filter.seed = config.seed;
  const Grid tg = config.truth_grid();
  const Grid sg = config.signal_grid();
  ex.truth = std::make_shared<const Model>(tg, config.model_params(config.truth_dt_s),
                                           std::make_shared<const EllipticWorkspace>(tg, config.strat()));
  ex.signal = std::make_shared<const Model>(sg, config.model_params(config.signal_dt_s),
                                            std::make_shared<const EllipticWorkspace>(sg, config.strat()));
  ex.stochastic =
      std::make_shared<const StochasticModel>(ex.signal, std::make_shared<const XiBasis>(make_xi(config)));
  ex.stations = make_equidistant_stations(sg, config.station_rows, config.station_cols);
  return ex;
}

double eddy_energy(const Model& model, const ModelState& s) {
  const CellVelocity v = model.cell_velocity(s);
  double e = 0.0;
  for (int l = 0; l < kLayers; ++l) {
    const double ub = model.params().background_u[static_cast<std::size_t>(l)];
    const auto u = v.u.layer(l);
    const auto w = v.v.layer(l);
    for (std::size_t c = 0; c < u.size(); ++c) e += 0.5 * ((u[c] - ub) * (u[c] - ub) + w[c] * w[c]);
  }
  return e / static_cast<double>(kLayers * model.grid().cells());
}

SpinupResult run_spinup(const Experiment& ex) {
  const auto& c = ex.config;
  const Model& m = *ex.truth;
  const double t_end = -c.ensemble_spinup_s;
  const long steps = ratio_of(c.spinup_s, c.truth_dt_s);
  const NoiseStream stream(c.seed, kSpinupStreamId);

  SpinupResult r{m.rest_state(), {"eddy_energy", MetricMode::kDomain, {}, {}}};
  if (c.spinup_perturbation_m2_per_s > 0.0) {
    r.state = m.state_from_psi(channel_perturbation(m.grid(), stream, c.spinup_perturbation_m2_per_s), {0.0, 0.0});
  }
  const double t0 = t_end - static_cast<double>(steps) * c.truth_dt_s;
  r.state.time = t0;
  r.energy.push(t0, eddy_energy(m, r.state));
  const long every = std::max(1L, ratio_of(3600.0, c.truth_dt_s));
  for (long n = 1; n <= steps; ++n) {
    m.step(r.state);
    if (!r.state.all_finite()) throw NumericalError("spin-up diverged at step " + std::to_string(r.state.step));
    if (n % every == 0 || n == steps) r.energy.push(t0 + static_cast<double>(n) * c.truth_dt_s, eddy_energy(m, r.state));
  }
  r.state.time = t_end;
  return r;
}

ModelState coarse_state(const Model& fine, const Model& coarse, const ModelState& s) {
  if (!(s.q.grid() == fine.grid())) throw InvalidArgument("state does not live on the fine grid");
  const EllipticSolution sol = fine.invert(s);
  return coarse.state_from_psi(coarse_grain(sol.psi, coarse.grid()), sol.wall, s.time);
}

std::size_t TruthRun::frame(double time) const {
  const double tol = 1e-6 * (times.size() > 1 ? times[1] - times[0] : 1.0);
  const auto it = std::lower_bound(times.begin(), times.end(), time - tol);
  if (it == times.end() || std::abs(*it - time) > tol) {
    throw InvalidArgument("no truth frame at t = " + fmt_double(time) + " s");
  }
  return static_cast<std::size_t>(it - times.begin());
}

TruthRun generate_truth(const Experiment& ex, const ModelState& fine_start) {
  const auto& c = ex.config;
  const Model& fine = *ex.truth;
  const Model& coarse = *ex.signal;
  if (!(fine_start.q.grid() == fine.grid())) {
    throw InvalidArgument("truth start is " + std::to_string(fine_start.q.grid().nx()) + "x" +
                          std::to_string(fine_start.q.grid().ny()) + ", config truth grid is " +
                          std::to_string(c.truth_nx) + "x" + std::to_string(c.truth_ny));
  }
  TruthRun t;
  ModelState s = fine_start;
  s.time = -c.ensemble_spinup_s;
  t.signal_start = coarse_state(fine, coarse, s);
  fine.advance(s, ratio_of(c.ensemble_spinup_s, c.truth_dt_s));

  const long sub = ratio_of(c.signal_dt_s, c.truth_dt_s);
  const long frames = ratio_of(c.assimilation_s, c.signal_dt_s);
  const long per_cycle = ratio_of(c.da_interval_s(), c.signal_dt_s);
  const NoiseStream stream(c.seed, kObservationStreamId);
  for (long k = 0; k <= frames; ++k) {
    if (k > 0) fine.advance(s, sub);
    if (!s.all_finite()) throw NumericalError("truth run diverged at step " + std::to_string(s.step));
    const double time = static_cast<double>(k) * c.signal_dt_s;
    s.time = time;
    t.times.push_back(time);
    t.velocity.push_back(coarse.cell_velocity(coarse_state(fine, coarse, s)));
    if (k > 0 && k % per_cycle == 0) {
      const auto cycle = static_cast<std::uint64_t>(k / per_cycle);
      const StationSigma sigma = compute_sigma(fine.cell_velocity(s), coarse.grid(), ex.stations);
      t.observations.push_back(observe_truth(t.velocity.back(), ex.stations, sigma, stream, cycle, time));
    }
  }
  return t;
}

void save_truth(const std::filesystem::path& dir, const TruthRun& truth) {
  std::filesystem::create_directories(dir);
  write_observations_csv(dir / "observations.csv", truth.observations);
  save_state(dir / "signal_start.qgs", truth.signal_start);
  const Grid& g = truth.signal_start.q.grid();
  SnapshotHeader h{g.nx(), g.ny(), kLayers, ValueKind::kTrajectory, static_cast<std::int32_t>(truth.times.size())};
  std::vector<double> values;
  values.reserve(payload_size(h));
  for (std::size_t f = 0; f < truth.times.size(); ++f) {
    values.push_back(truth.times[f]);
    const auto u = truth.velocity[f].u.values();
    const auto v = truth.velocity[f].v.values();
    values.insert(values.end(), u.begin(), u.end());
    values.insert(values.end(), v.begin(), v.end());
  }
  write_snapshot(dir / "truth_velocity.qgf", h, values);
}

TruthRun load_truth(const std::filesystem::path& dir, const Experiment& ex) {
  const Grid g = ex.config.signal_grid();
  TruthRun t;
  t.signal_start = load_state(dir / "signal_start.qgs", g);
  t.observations = read_observations_csv(dir / "observations.csv", g);
  const Snapshot snap = read_snapshot(dir / "truth_velocity.qgf");
  if (snap.header.kind != ValueKind::kTrajectory || snap.header.nx != g.nx() || snap.header.ny != g.ny()) {
    throw ConfigError("truth_velocity.qgf does not match the signal grid");
  }
  const std::size_t n = kLayers * g.cells();
  std::size_t pos = 0;
  for (int f = 0; f < snap.header.records; ++f) {
    t.times.push_back(snap.values[pos++]);
    CellVelocity cv{LayeredField(g), LayeredField(g)};
    std::copy_n(snap.values.begin() + static_cast<std::ptrdiff_t>(pos), n, cv.u.values().begin());
    pos += n;
    std::copy_n(snap.values.begin() + static_cast<std::ptrdiff_t>(pos), n, cv.v.values().begin());
    pos += n;
    t.velocity.push_back(std::move(cv));
  }
  return t;
}

Ensemble init_ensemble(const Experiment& ex, const ModelState& signal_start) {
  const auto& c = ex.config;
  if (!(signal_start.q.grid() == ex.signal->grid())) throw InvalidArgument("signal start is not on the signal grid");
  ModelState s0 = signal_start;
  s0.time = -c.ensemble_spinup_s;
  Ensemble ens = make_ensemble(std::vector<ModelState>(static_cast<std::size_t>(c.filter.n), s0), c.seed);
  if (c.ensemble_spinup_s > 0.0) propagate(ens, *ex.stochastic, 0.0);
  for (auto& p : ens.particles) p.state.time = 0.0;
  return ens;
}

void save_ensemble(const std::filesystem::path& dir, const Ensemble& ens) {
  std::filesystem::create_directories(dir);
  for (std::size_t n = 0; n < ens.size(); ++n) save_state(dir / particle_file(n), ens.particles[n].state);
}

Ensemble load_ensemble(const std::filesystem::path& dir, const Experiment& ex) {
  std::vector<ModelState> states;
  for (std::size_t n = 0;; ++n) {
    const auto path = dir / particle_file(n);
    if (!std::filesystem::exists(path)) break;
    states.push_back(load_state(path, ex.config.signal_grid()));
  }
  if (states.size() != static_cast<std::size_t>(ex.config.filter.n)) {
    throw ConfigError("found " + std::to_string(states.size()) + " particles in " + dir.string() + ", config asks for " +
                      std::to_string(ex.config.filter.n));
  }
  return make_ensemble(std::move(states), ex.config.seed);
}

// ---------------------------------------------------------------------------------------------
// Assimilation runs

const MetricSeries& RunResult::series(const std::string& metric, MetricMode mode) const {
  for (const auto& m : metrics) {
    if (m.metric == metric && m.mode == mode) return m;
  }
  throw InvalidArgument("run has no series " + metric + " (" + to_string(mode) + ")");
}

RunResult run_ensemble(const Experiment& ex, Ensemble ens, Algorithm algorithm, const TruthRun& truth) {
  const auto& c = ex.config;
  const Model& model = *ex.signal;
  const StationSet& stations = ex.stations;
  const int n = static_cast<int>(ens.size());
  const long window_steps = ratio_of(c.da_interval_s(), c.signal_dt_s);
  const NoiseStream rank_stream(c.seed, kRankStreamId);

  RunResult r;
  r.algorithm = algorithm;
  for (std::size_t k = 0; k < c.rank_stations.size(); ++k) r.ranks.emplace_back(n);
  MetricSeries rb_st{"rb", MetricMode::kStations, {}, {}};
  MetricSeries eme_st{"eme", MetricMode::kStations, {}, {}};
  MetricSeries rb_dom{"rb", MetricMode::kDomain, {}, {}};
  MetricSeries eme_dom{"eme", MetricMode::kDomain, {}, {}};
  MetricSeries ess_series{"ess", MetricMode::kStations, {}, {}};
  MetricSeries spread_series{"spread", MetricMode::kStations, {}, {}};

  // forecast[step][particle] = (u, v) at each rank station
  std::vector<std::vector<std::vector<StationReading>>> forecast(
      static_cast<std::size_t>(window_steps), std::vector<std::vector<StationReading>>(static_cast<std::size_t>(n)));
  double window_t0 = 0.0;
  const StepObserver observer = [&](int particle, const ModelState& s) {
    const long step = std::lround((s.time - window_t0) / c.signal_dt_s) - 1;
    if (step < 0 || step >= window_steps || particle < 0) return;
    const auto all = project(model, s, stations);
    auto& slot = forecast[static_cast<std::size_t>(step)][static_cast<std::size_t>(particle)];
    slot.clear();
    for (int st : c.rank_stations) slot.push_back(all[static_cast<std::size_t>(st)]);
  };

  for (int cycle = 1; cycle <= c.cycles(); ++cycle) {
    const double t1 = cycle * c.da_interval_s();
    const auto obs_it = std::find_if(truth.observations.begin(), truth.observations.end(), [&](const auto& o) {
      return std::abs(o.time - t1) <= 1e-6 * c.da_interval_s();
    });
    if (obs_it == truth.observations.end()) throw ConfigError("missing observation at t = " + fmt_double(t1) + " s");
    window_t0 = t1 - c.da_interval_s();
    const AssimilationEvent ev = assimilation_cycle(ens, algorithm, *obs_it, c.filter, *ex.stochastic, &observer);
    for (auto& p : ens.particles) p.state.time = t1;

    for (long step = 0; step < window_steps; ++step) {
      const std::size_t f = truth.frame(window_t0 + static_cast<double>(step + 1) * c.signal_dt_s);
      const auto truth_at = sample_at_stations(truth.velocity[f], stations);
      for (std::size_t k = 0; k < c.rank_stations.size(); ++k) {
        const StationReading& tv = truth_at[static_cast<std::size_t>(c.rank_stations[k])];
        for (int comp = 0; comp < 2; ++comp) {
          std::vector<double> members(static_cast<std::size_t>(n));
          for (int i = 0; i < n; ++i) {
            const StationReading& m = forecast[static_cast<std::size_t>(step)][static_cast<std::size_t>(i)][k];
            members[static_cast<std::size_t>(i)] = comp == 0 ? m.u : m.v;
          }
          const double u = rank_stream.uniform(Channel::kRank, f, static_cast<std::uint32_t>(2 * k + comp));
          r.ranks[k].add(rank_of_truth(comp == 0 ? tv.u : tv.v, members, u));
        }
      }
    }

    const std::size_t f = truth.frame(t1);
    const auto truth_st = flatten(sample_at_stations(truth.velocity[f], stations));
    const auto truth_dom = flatten_domain(truth.velocity[f]);
    std::vector<std::vector<double>> st(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> dom(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
      const CellVelocity v = model.cell_velocity(ens.particles[static_cast<std::size_t>(i)].state);
      st[static_cast<std::size_t>(i)] = flatten(sample_at_stations(v, stations));
      dom[static_cast<std::size_t>(i)] = flatten_domain(v);
    }
    rb_st.push(t1, relative_bias(truth_st, st));
    eme_st.push(t1, ensemble_mean_error(truth_st, st));
    rb_dom.push(t1, relative_bias(truth_dom, dom));
    eme_dom.push(t1, ensemble_mean_error(truth_dom, dom));
    if (algorithm != Algorithm::kFree) ess_series.push(t1, ev.ess_before);

    double spread_sum = 0.0;
    for (std::size_t row = 0; row < truth_st.size(); ++row) {
      std::vector<double> values(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i)][row];
      StationSpread sp{t1, static_cast<int>(row / 2), row % 2 == 0 ? 'u' : 'v', truth_st[row], spread_of(values)};
      spread_sum += sp.spread.stddev;
      r.spreads.push_back(sp);
    }
    spread_series.push(t1, spread_sum / static_cast<double>(truth_st.size()));
    r.events.push_back(ev);
    spdlog::debug("{} t={}h eme={:.4f} ess={:.2f} p={} accept={:.3f}", to_string(algorithm), t1 / 3600.0,
                  eme_st.values.back(), ev.ess_before, ev.p_stages, ev.accept_rate);
  }
  r.metrics = {rb_st, eme_st, rb_dom, eme_dom, spread_series};
  if (algorithm != Algorithm::kFree) r.metrics.push_back(ess_series);
  r.final = std::move(ens);
  return r;
}

double final_day_spread(const RunResult& r, double end_time) {
  double sum = 0.0;
  long count = 0;
  for (const auto& s : r.spreads) {
    if (s.time > end_time - 86400.0 + 1e-6) {
      sum += s.spread.stddev;
      ++count;
    }
  }
  if (count == 0) throw InvalidArgument("run has no spread data in its last day");
  return sum / static_cast<double>(count);
}

void write_run(const std::filesystem::path& dir, const RunResult& r) {
  std::filesystem::create_directories(dir);
  const std::string name = to_string(r.algorithm);
  write_metrics_csv(dir / ("metrics_" + name + ".csv"), r.metrics);
  write_event_log(dir / ("events_" + name + ".csv"), r.events);
  for (std::size_t k = 0; k < r.ranks.size(); ++k) {
    write_rank_csv(dir / ("ranks_" + name + "_" + std::to_string(k) + ".csv"), r.ranks[k]);
  }
  auto out = open_out(dir / ("spread_" + name + ".csv"));
  out << "time_s,station,component,truth,mean,stddev,min,max,q05,q95\n";
  char buf[512];
  for (const auto& s : r.spreads) {
    std::snprintf(buf, sizeof buf, "%.17g,%d,%c,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.time, s.station,
                  s.component, s.truth, s.spread.mean, s.spread.stddev, s.spread.min, s.spread.max, s.spread.q05,
                  s.spread.q95);
    out << buf;
  }
  save_ensemble(dir / ("ensemble_" + name), r.final);
}

std::vector<RunResult> run_assimilation(const Experiment& ex, const Ensemble& ens,
                                        const std::filesystem::path& truth_dir, const std::filesystem::path& out) {
  std::vector<Algorithm> algorithms{ex.config.algorithm};
  if (ex.config.algorithm != Algorithm::kFree) algorithms.push_back(Algorithm::kFree);
  std::filesystem::create_directories(out);
  auto log = open_out(out / "inputs.csv");
  log << "run,file,checksum\n";
  std::vector<std::uint64_t> first;
  std::vector<RunResult> results;
  for (Algorithm a : algorithms) {
    std::vector<std::uint64_t> sums;
    for (const char* f : kTruthFiles) {
      sums.push_back(file_checksum(truth_dir / f));
      char buf[64];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(sums.back()));
      log << to_string(a) << ',' << f << ',' << buf << '\n';
      spdlog::info("{} input {} checksum {}", to_string(a), f, buf);
    }
    if (first.empty()) {
      first = sums;
    } else if (sums != first) {
      throw ConfigError("truth files changed between paired runs");
    }
    const TruthRun truth = load_truth(truth_dir, ex);
    spdlog::info("running {} ensemble, N = {}, {} cycles", to_string(a), ens.size(), ex.config.cycles());
    results.push_back(run_ensemble(ex, ens, a, truth));
    write_run(out, results.back());
  }
  return results;
}

std::vector<RunSummary> summarize_runs(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    if (f.rfind("metrics_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunSummary> out;
  for (const auto& path : files) {
    RunSummary s;
    s.algorithm = path.stem().string().substr(8);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::map<std::pair<std::string, std::string>, std::pair<double, long>> acc;
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() != 4) throw FormatError("expected 4 columns in " + path.string(), 0);
      auto& a = acc[{f[1], f[2]}];
      a.first += parse_number<double>("value", f[3]);
      ++a.second;
    }
    const auto mean = [&](const std::string& m, const std::string& mode) {
      const auto it = acc.find({m, mode});
      return it == acc.end() || it->second.second == 0 ? 0.0 : it->second.first / static_cast<double>(it->second.second);
    };
    s.eme_stations = mean("eme", "stations");
    s.eme_domain = mean("eme", "domain");
    s.rb_stations = mean("rb", "stations");

    std::ifstream sp(dir / ("spread_" + s.algorithm + ".csv"));
    if (sp) {
      std::getline(sp, line);
      std::vector<std::pair<double, double>> rows;
      while (std::getline(sp, line)) {
        const auto f = split_csv(line);
        if (f.size() != 10) throw FormatError("expected 10 columns in spread_" + s.algorithm + ".csv", 0);
        rows.emplace_back(parse_number<double>("time_s", f[0]), parse_number<double>("stddev", f[5]));
      }
      double end = 0.0;
      for (const auto& row : rows) end = std::max(end, row.first);
      double sum = 0.0;
      long count = 0;
      for (const auto& row : rows) {
        if (row.first > end - 86400.0 + 1e-6) {
          sum += row.second;
          ++count;
        }
      }
      s.final_day_spread = count ? sum / static_cast<double>(count) : 0.0;
    }
    for (int k = 0;; ++k) {
      std::ifstream rk(dir / ("ranks_" + s.algorithm + "_" + std::to_string(k) + ".csv"));
      if (!rk) break;
      std::getline(rk, line);
      std::vector<long> counts;
      while (std::getline(rk, line)) {
        const auto f = split_csv(line);
        if (f.size() != 2) throw FormatError("expected 2 columns in a rank file", 0);
        counts.push_back(parse_number<long>("count", f[1]));
      }
      if (counts.empty()) continue;
      RankHistogram h(static_cast<int>(counts.size()) - 1);
      for (std::size_t b = 0; b < counts.size(); ++b) {
        for (long i = 0; i < counts[b]; ++i) h.add(static_cast<int>(b));
      }
      s.rank_chi_square.push_back(h.samples() > 0 ? h.chi_square() : 0.0);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace qgpf
