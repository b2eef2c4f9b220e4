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

// qgpf: command-line driver for the twin experiment.
//
// Every subcommand works inside one output directory (--out, default from the config):
//   spinup/          state.qgs, energy.csv
//   truth/           observations.csv, truth_velocity.qgf, signal_start.qgs
//   ensemble/        particle_NNN.qgs
//   run/             metrics, events, ranks, spreads, final ensembles
//   xi.qgx           written by xi-gen
//   convergence.csv  written by convergence

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "qgpf/errors.hpp"
#include "qgpf/harness.hpp"
#include "qgpf/snapshot.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algorithm;
  std::optional<std::string> out;
  std::string xi;
  bool verbose = false;
};

qgpf::ExperimentConfig resolve(const Options& o) {
  qgpf::ExperimentConfig c = o.config.empty() ? qgpf::ExperimentConfig{} : qgpf::load_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.filter.seed = *o.seed;
  }
  if (o.algorithm) c.algorithm = qgpf::parse_algorithm(*o.algorithm);
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

void require(const fs::path& p, const char* producer) {
  if (!fs::exists(p)) throw qgpf::ConfigError(p.string() + " not found; run `qgpf " + producer + "` first");
}

void cmd_spinup(const qgpf::ExperimentConfig& c) {
  const auto ex = qgpf::make_experiment(c);
  spdlog::info("spin-up on {}x{}, {} days", c.truth_nx, c.truth_ny, c.spinup_s / 86400.0);
  const auto r = qgpf::run_spinup(ex);
  const fs::path dir = c.output_dir / "spinup";
  fs::create_directories(dir);
  qgpf::save_state(dir / "state.qgs", r.state);
  qgpf::write_metrics_csv(dir / "energy.csv", {r.energy});
  spdlog::info("eddy energy {:.4e} -> {:.4e} m^2/s^2", r.energy.values.front(), r.energy.values.back());
}

void cmd_truth(const qgpf::ExperimentConfig& c) {
  const fs::path start = c.output_dir / "spinup" / "state.qgs";
  require(start, "spinup");
  const auto ex = qgpf::make_experiment(c);
  const auto truth = qgpf::generate_truth(ex, qgpf::load_state(start, c.truth_grid()));
  qgpf::save_truth(c.output_dir / "truth", truth);
  spdlog::info("{} truth frames, {} observation times", truth.times.size(), truth.observations.size());
}

void cmd_xi_gen(const qgpf::ExperimentConfig& c) {
  const auto xi = qgpf::synthesize_xi(c.signal_grid(), c.k_modes, c.xi_spectrum, c.xi_seed,
                                      c.xi_amplitude_m_per_sqrt_s);
  fs::create_directories(c.output_dir);
  qgpf::save_xi(c.output_dir / "xi.qgx", xi);
  std::cout << "wrote " << (c.output_dir / "xi.qgx").string() << " (" << xi.size() << " modes)\n";
}

int cmd_xi_check(const qgpf::ExperimentConfig& c, const std::string& path_flag) {
  fs::path path = path_flag.empty() ? fs::path(c.xi_file) : fs::path(path_flag);
  if (path.empty()) path = c.output_dir / "xi.qgx";
  require(path, "xi-gen");
  const auto xi = qgpf::load_xi(path, c.signal_grid());  // throws if divergent or leaking through walls
  std::printf("mode  divergence  wall_flux  peak_layer1\n");
  for (int k = 0; k < xi.size(); ++k) {
    double peak = 0.0;
    for (double x : xi.mode(k).xf(0)) peak = std::max(peak, std::abs(x));
    for (double x : xi.mode(k).yf(0)) peak = std::max(peak, std::abs(x));
    std::printf("%4d  %10.3e  %9.3e  %.4e\n", k, qgpf::normalized_divergence(xi.mode(k)),
                qgpf::normalized_wall_flux(xi.mode(k)), peak);
  }
  if (xi.size() != c.k_modes) {
    spdlog::error("file holds {} modes, config asks for {}", xi.size(), c.k_modes);
    return kExitConfig;
  }
  return 0;
}

void cmd_init_ensemble(const qgpf::ExperimentConfig& c) {
  const fs::path start = c.output_dir / "truth" / "signal_start.qgs";
  require(start, "truth");
  const auto ex = qgpf::make_experiment(c);
  const auto ens = qgpf::init_ensemble(ex, qgpf::load_state(start, c.signal_grid()));
  qgpf::save_ensemble(c.output_dir / "ensemble", ens);
  spdlog::info("{} particles written", ens.size());
}

void print_summary(const std::vector<qgpf::RunSummary>& runs) {
  std::printf("%-10s %12s %12s %12s %14s  rank_chi2\n", "algorithm", "eme_stations", "eme_domain", "rb_stations",
              "final_spread");
  for (const auto& r : runs) {
    std::printf("%-10s %12.5f %12.5f %12.5f %14.4e ", r.algorithm.c_str(), r.eme_stations, r.eme_domain,
                r.rb_stations, r.final_day_spread);
    for (double x : r.rank_chi_square) std::printf(" %.1f", x);
    std::printf("\n");
  }
}

void cmd_assimilate(const qgpf::ExperimentConfig& c) {
  require(c.output_dir / "truth" / "observations.csv", "truth");
  require(c.output_dir / "ensemble", "init-ensemble");
  const auto ex = qgpf::make_experiment(c);
  const auto ens = qgpf::load_ensemble(c.output_dir / "ensemble", ex);
  qgpf::run_assimilation(ex, ens, c.output_dir / "truth", c.output_dir / "run");
  print_summary(qgpf::summarize_runs(c.output_dir / "run"));
}

void cmd_metrics(const qgpf::ExperimentConfig& c) {
  const fs::path dir = c.output_dir / "run";
  require(dir, "assimilate");
  print_summary(qgpf::summarize_runs(dir));
}

void cmd_convergence(const qgpf::ExperimentConfig& c) {
  const auto r = qgpf::convergence_study(qgpf::make_convergence_setup(c, true));
  fs::create_directories(c.output_dir);
  std::ofstream out(c.output_dir / "convergence.csv");
  out << "dt_s,error\n";
  std::printf("%12s  %12s\n", "dt_s", "rms_error");
  for (std::size_t k = 0; k < r.dt.size(); ++k) {
    out << r.dt[k] << ',' << r.errors[k] << '\n';
    std::printf("%12.1f  %12.4e\n", r.dt[k], r.errors[k]);
  }
  std::printf("order %.3f\n", r.order);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-layer QG channel twin experiments with particle filters"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Override the run seed");
  app.add_option("--algorithm", o.algorithm, "Override the filter")
      ->check(CLI::IsMember({"bootstrap", "tempered", "nudged", "free"}));
  app.add_option("--out", o.out, "Output directory");
  app.add_flag("-v,--verbose", o.verbose, "Per-cycle debug logging");

  auto* spinup = app.add_subcommand("spinup", "Deterministic spin-up on the truth grid");
  auto* truth = app.add_subcommand("truth", "Truth run, coarse-grained truth and observations");
  auto* xi_gen = app.add_subcommand("xi-gen", "Write a synthetic noise basis");
  auto* xi_check = app.add_subcommand("xi-check", "Validate a noise basis file");
  xi_check->add_option("file", o.xi, "Basis file (default: config xi_file, then OUT/xi.qgx)");
  auto* init = app.add_subcommand("init-ensemble", "Initial ensemble from the coarse truth");
  auto* assimilate = app.add_subcommand("assimilate", "Configured filter plus a free control run");
  auto* metrics = app.add_subcommand("metrics", "Summarize a finished run");
  auto* convergence = app.add_subcommand("convergence", "Self-convergence of the stochastic scheme");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    const auto c = resolve(o);
    if (spinup->parsed()) cmd_spinup(c);
    if (truth->parsed()) cmd_truth(c);
    if (xi_gen->parsed()) cmd_xi_gen(c);
    if (xi_check->parsed()) return cmd_xi_check(c, o.xi);
    if (init->parsed()) cmd_init_ensemble(c);
    if (assimilate->parsed()) cmd_assimilate(c);
    if (metrics->parsed()) cmd_metrics(c);
    if (convergence->parsed()) cmd_convergence(c);
  } catch (const qgpf::ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const qgpf::InvalidArgument& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const qgpf::FormatError& e) {
    spdlog::error("input: {}", e.what());
    return kExitConfig;
  } catch (const qgpf::NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
