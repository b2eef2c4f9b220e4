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

#ifndef QGPF_CABARET_HPP
#define QGPF_CABARET_HPP

#include <array>
#include <filesystem>
#include <memory>

#include "qgpf/elliptic.hpp"
#include "qgpf/grid.hpp"

/**
 * \file
 * \brief Deterministic CABARET predictor / extrapolator / corrector for the two-layer channel.
 *
 * The prognostic field is the total PV: the anomaly that the elliptic problem inverts plus
 * the background ramp s1 (U1 - U2) y (layer 1) and s2 (U2 - U1) y (layer 2) produced by the
 * uniform background flow U. Face velocities carry U in the x component.
 *
 * One step:
 *
 *     q*        = q + dt/2 F(q_f, u) + dt (3/2 R^n - 1/2 R^{n-1}) [+ extra]
 *     psi       = invert(q* - q_bg)
 *     q^{n+1/2} = q* + dt (nu Lap^2 psi - [layer 2] mu Lap psi)
 *     u^{n+1/2} from psi;  u^{n+1} = 3/2 u^{n+1/2} - 1/2 u^{n-1/2}
 *     q_f^{n+1} = limited upwind extrapolation along u^{n+1}
 *     q^{n+1}   = q^{n+1/2} + dt/2 F(q_f^{n+1}, u^{n+1}) [+ extra]
 *
 * The bracketed extra terms are the hooks used by the stochastic scheme.
 */

namespace qgpf {

struct ModelParams {
  double beta = 0.0;                          ///< m^-1 s^-1
  double nu = 0.0;                            ///< m^2 s^-1
  double mu = 0.0;                            ///< s^-1, layer 2 only
  std::array<double, kLayers> background_u{};  ///< m/s
  double dt = 0.0;                            ///< s
  double max_courant = 0.5;
  /// Weights (a, b) of the stochastic beta term a R - b R; (3, 1) or (1.5, 0.5).
  double noise_beta_current = 3.0;
  double noise_beta_previous = 1.0;

  void validate() const;
};

struct ModelState {
  LayeredField q;                  ///< total PV at cell centers, time n
  FaceField q_faces;               ///< PV on faces, time n
  FaceField velocity;              ///< u on x-faces, v on y-faces, time n
  FaceField velocity_half_prev;    ///< time n - 1/2
  LayeredField beta_prev;          ///< R^{n-1}
  LayeredField psi;                ///< stream-function anomaly of the latest inversion
  std::array<double, kLayers> wall{};
  double mass = 0.0;               ///< sum (psi1 - psi2) dA, held fixed
  double time = 0.0;
  long step = 0;

  [[nodiscard]] bool all_finite() const noexcept;
};

/// Predictor output.
struct HalfStep {
  LayeredField q_half;
  LayeredField beta_now;   ///< R^n
  EllipticSolution solution;
  FaceField velocity_half;
};

/// Extrapolator output.
struct Extrapolated {
  FaceField q_faces;       ///< limited face PV at n+1
  FaceField velocity;      ///< model face velocity at n+1 (noise excluded)
  double courant = 0.0;    ///< of the advecting velocity actually used
};

class Model {
 public:
  Model(const Grid& grid, ModelParams params, std::shared_ptr<const EllipticWorkspace> elliptic);

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
  [[nodiscard]] const EllipticWorkspace& elliptic() const noexcept { return *elliptic_; }
  [[nodiscard]] std::shared_ptr<const EllipticWorkspace> elliptic_ptr() const noexcept { return elliptic_; }
  [[nodiscard]] const LayeredField& background_pv() const noexcept { return q_bg_; }

  /// State at rest relative to the background flow.
  [[nodiscard]] ModelState rest_state() const;
  /// State from a PV anomaly; face data initialized from centers, history bootstrapped.
  [[nodiscard]] ModelState make_state(const LayeredField& q_anomaly, double mass, double time = 0.0) const;
  [[nodiscard]] ModelState state_from_psi(const LayeredField& psi, const std::array<double, kLayers>& wall,
                                          double time = 0.0) const;

  [[nodiscard]] LayeredField anomaly(const ModelState& s) const;
  /// Stream function of the current centers (fresh inversion, not the stored half-step psi).
  [[nodiscard]] EllipticSolution invert(const ModelState& s) const;
  /// Cell velocity of the current centers, background flow included.
  [[nodiscard]] CellVelocity cell_velocity(const ModelState& s) const;
  /// Cell velocity of a stream-function anomaly, background flow included.
  [[nodiscard]] CellVelocity cell_velocity(const LayeredField& psi, const std::array<double, kLayers>& wall) const;
  [[nodiscard]] FaceField face_velocity(const LayeredField& psi, const std::array<double, kLayers>& wall,
                                        bool with_background = true) const;

  /// `extra` (optional) is added to q* before the inversion.
  [[nodiscard]] HalfStep predictor(const ModelState& s, const LayeredField* extra = nullptr) const;
  /// `noise_velocity` (optional) is added to u^{n+1} for upwinding and limiting only.
  [[nodiscard]] Extrapolated extrapolator(const ModelState& s, const HalfStep& h,
                                          const FaceField* noise_velocity = nullptr) const;
  /// q^{n+1} = q^{n+1/2} + dt/2 F(q_f^{n+1}, u^{n+1}) + extra.
  [[nodiscard]] LayeredField corrector(const HalfStep& h, const Extrapolated& e, const LayeredField* extra = nullptr) const;
  /// Install the new time level and shift the history.
  void commit(ModelState& s, HalfStep&& h, Extrapolated&& e, LayeredField&& q_new) const;

  void step(ModelState& s) const;
  void advance(ModelState& s, long steps) const;

 private:
  Grid grid_;
  ModelParams params_;
  std::shared_ptr<const EllipticWorkspace> elliptic_;
  LayeredField q_bg_;
};

/// -(Dx[u q_x] + Dy[v q_y]) per cell and layer.
LayeredField advective_divergence(const FaceField& q_faces, const FaceField& velocity);

/// R = -(beta / 2) (v_bottom + v_top) per cell and layer.
LayeredField beta_tendency(const FaceField& velocity, double beta);

/// nu Lap^2 psi - [layer 2] mu Lap psi.
LayeredField viscous_tendency(const LayeredField& psi, const std::array<double, kLayers>& wall, double nu,
                              double mu);

/// Doubles in a serialized ModelState.
std::size_t model_state_payload_size(int nx, int ny);

void save_state(const std::filesystem::path& path, const ModelState& s);
ModelState load_state(const std::filesystem::path& path, const Grid& grid);

/// Domain integral of total PV per layer.
std::array<double, kLayers> pv_integral(const ModelState& s);

}  // namespace qgpf

#endif  // QGPF_CABARET_HPP
