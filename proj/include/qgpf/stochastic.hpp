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

#ifndef QGPF_STOCHASTIC_HPP
#define QGPF_STOCHASTIC_HPP

#include <memory>
#include <span>
#include <vector>

#include "qgpf/cabaret.hpp"
#include "qgpf/xi.hpp"

/**
 * \file
 * \brief Stochastic-transport CABARET step.
 *
 * With G_k(q) = -(Dx[xi^u_k q] + Dy[xi^v_k q]) and the constant beta contribution
 * G_kb = (a - b) R_k, R_k = -(beta/2)(xi^v_k bottom + xi^v_k top), the deterministic stages
 * are extended by
 *
 *     predictor:    + sum_k (G_k(q_f^n) + G_kb) dW_k / 2
 *     extrapolator: upwinding and limiting along u^{n+1} + Xi / dt,  Xi = sum_k xi_k dW_k
 *     corrector:    + sum_k (G_k(q_f^{n+1}) + G_kb) (dW_k + lambda_k dt) / 2
 *
 * The drift lambda is optional and enters the corrector only.
 */

namespace qgpf {

class StochasticModel {
 public:
  StochasticModel(std::shared_ptr<const Model> model, std::shared_ptr<const XiBasis> xi);

  [[nodiscard]] const Model& model() const noexcept { return *model_; }
  [[nodiscard]] std::shared_ptr<const Model> model_ptr() const noexcept { return model_; }
  [[nodiscard]] const XiBasis& xi() const noexcept { return *xi_; }
  [[nodiscard]] std::shared_ptr<const XiBasis> xi_ptr() const noexcept { return xi_; }
  [[nodiscard]] int modes() const noexcept { return xi_->size(); }

  /// G_kb for mode k.
  [[nodiscard]] const LayeredField& beta_noise(int k) const { return beta_noise_.at(static_cast<std::size_t>(k)); }

  /// sum_k w_k (G_k(q_faces) + G_kb).
  [[nodiscard]] LayeredField noise_tendency(const FaceField& q_faces, std::span<const double> w) const;

  /// G_k(q_faces) + G_kb for a single mode.
  [[nodiscard]] LayeredField mode_tendency(const FaceField& q_faces, int k) const;

  struct Stages {
    HalfStep half;
    Extrapolated ext;
  };

  /// Predictor and extrapolator for increments dW (K values).
  [[nodiscard]] Stages predict(const ModelState& s, std::span<const double> dw) const;
  /// Corrector; lambda is empty or K values, applied over `lambda_dt` (defaults to dt).
  [[nodiscard]] LayeredField correct(const Stages& st, std::span<const double> dw, std::span<const double> lambda = {},
                                     double lambda_dt = 0.0) const;
  void commit(ModelState& s, Stages&& st, LayeredField&& q_new) const;

  void step(ModelState& s, std::span<const double> dw, std::span<const double> lambda = {}) const;

 private:
  void check_size(std::span<const double> v, const char* what) const;

  std::shared_ptr<const Model> model_;
  std::shared_ptr<const XiBasis> xi_;
  std::vector<LayeredField> beta_noise_;
};

/// Output of heun_form_check.
struct HeunReport {
  double max_abs_difference = 0.0;   ///< between the step and the two-stage Heun form
  double relative_difference = 0.0;  ///< max_abs_difference / max|q^{n+1}|
  double drift_norm = 0.0;           ///< max|dt F + 2 dt F_beta + 2 dt F_visc| (order dt)
  double noise_norm = 0.0;           ///< max|sum_k (G_k + G_kb) dW_k| (order dW)
  double quadratic_norm = 0.0;       ///< max|1/2 sum_k dW_k G_k(sum_j (G_j + G_jb) dW_j)| (order dW^2)
};

/// Compares one stochastic step with the Heun form
///
///     q*      = q^n + dt F(q^n) + 2 dt F_beta + 2 dt F_visc + sum_k (G_k(q^n) + G_kb) dW_k
///     q^{n+1} = (q* + q^n)/2 + dt/2 F(q*) + sum_k (G_k(q*) + G_kb) dW_k / 2
///
/// where F(q*) and G_k(q*) use the face values of q*, i.e. the limited extrapolated faces.
HeunReport heun_form_check(const StochasticModel& sm, const ModelState& s, std::span<const double> dw);

}  // namespace qgpf

#endif  // QGPF_STOCHASTIC_HPP
