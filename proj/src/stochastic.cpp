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

#include "qgpf/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "qgpf/kernels.hpp"

namespace qgpf {

StochasticModel::StochasticModel(std::shared_ptr<const Model> model, std::shared_ptr<const XiBasis> xi)
    : model_(std::move(model)), xi_(std::move(xi)) {
  if (!model_ || !xi_) throw InvalidArgument("stochastic model needs a model and a xi basis");
  if (xi_->grid() != model_->grid()) throw InvalidArgument("xi basis built for a different grid");
  const auto& p = model_->params();
  const double c = p.noise_beta_current - p.noise_beta_previous;
  beta_noise_.reserve(static_cast<std::size_t>(xi_->size()));
  for (int k = 0; k < xi_->size(); ++k) {
    LayeredField r = beta_tendency(xi_->mode(k), p.beta);
    for (double& x : r.values()) x *= c;
    beta_noise_.push_back(std::move(r));
  }
}

void StochasticModel::check_size(std::span<const double> v, const char* what) const {
  if (v.size() != static_cast<std::size_t>(xi_->size())) {
    throw InvalidArgument(std::string(what) + " has " + std::to_string(v.size()) + " entries, the xi basis has " +
                          std::to_string(xi_->size()) + " modes");
  }
}

LayeredField StochasticModel::noise_tendency(const FaceField& q_faces, std::span<const double> w) const {
  check_size(w, "noise weight vector");
  LayeredField out(model_->grid());
  if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) return out;
  const FaceField xi_w = xi_->combine(w);
  const Grid& g = model_->grid();
  for (int l = 0; l < kLayers; ++l) {
    kernels::add_flux_divergence(g, q_faces.xf(l), q_faces.yf(l), xi_w.xf(l), xi_w.yf(l), 1.0, out.layer(l));
  }
  auto o = out.values();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const auto b = beta_noise_[k].values();
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += w[k] * b[c];
  }
  return out;
}

LayeredField StochasticModel::mode_tendency(const FaceField& q_faces, int k) const {
  LayeredField out = advective_divergence(q_faces, xi_->mode(k));
  const auto b = beta_noise_.at(static_cast<std::size_t>(k)).values();
  auto o = out.values();
  for (std::size_t c = 0; c < o.size(); ++c) o[c] += b[c];
  return out;
}

StochasticModel::Stages StochasticModel::predict(const ModelState& s, std::span<const double> dw) const {
  check_size(dw, "increment vector");
  std::vector<double> half(dw.begin(), dw.end());
  for (double& x : half) x *= 0.5;
  const LayeredField extra = noise_tendency(s.q_faces, half);
  Stages st;
  st.half = model_->predictor(s, &extra);
  FaceField xi_dw = xi_->combine(dw);
  const double inv_dt = 1.0 / model_->params().dt;
  for (double& x : xi_dw.x_values()) x *= inv_dt;
  for (double& x : xi_dw.y_values()) x *= inv_dt;
  st.ext = model_->extrapolator(s, st.half, &xi_dw);
  return st;
}

LayeredField StochasticModel::correct(const Stages& st, std::span<const double> dw, std::span<const double> lambda,
                                      double lambda_dt) const {
  check_size(dw, "increment vector");
  std::vector<double> w(dw.begin(), dw.end());
  if (!lambda.empty()) {
    check_size(lambda, "drift vector");
    const double h = (lambda_dt > 0.0) ? lambda_dt : model_->params().dt;
    for (std::size_t k = 0; k < w.size(); ++k) w[k] += lambda[k] * h;
  }
  for (double& x : w) x *= 0.5;
  const LayeredField extra = noise_tendency(st.ext.q_faces, w);
  return model_->corrector(st.half, st.ext, &extra);
}

void StochasticModel::commit(ModelState& s, Stages&& st, LayeredField&& q_new) const {
  model_->commit(s, std::move(st.half), std::move(st.ext), std::move(q_new));
}

void StochasticModel::step(ModelState& s, std::span<const double> dw, std::span<const double> lambda) const {
  Stages st = predict(s, dw);
  LayeredField q = correct(st, dw, lambda);
  commit(s, std::move(st), std::move(q));
}

HeunReport heun_form_check(const StochasticModel& sm, const ModelState& s, std::span<const double> dw) {
  const Model& m = sm.model();
  const Grid& g = m.grid();
  const auto& p = m.params();
  const double dt = p.dt;
  const std::size_t n = kLayers * g.cells();
  const int kk = sm.modes();
  if (dw.size() != static_cast<std::size_t>(kk)) throw InvalidArgument("increment vector size mismatch");

  const LayeredField f_n = advective_divergence(s.q_faces, s.velocity);
  const LayeredField r_n = beta_tendency(s.velocity, p.beta);
  LayeredField noise_n(g);
  for (int k = 0; k < kk; ++k) {
    const LayeredField t = sm.mode_tendency(s.q_faces, k);
    for (std::size_t c = 0; c < n; ++c) noise_n.values()[c] += t.values()[c] * dw[k];
  }

  // psi at the half step, from the same pre-viscous PV the scheme inverts.
  LayeredField q_pre(g);
  for (std::size_t c = 0; c < n; ++c) {
    const double fb = 1.5 * r_n.values()[c] - 0.5 * s.beta_prev.values()[c];
    q_pre.values()[c] = s.q.values()[c] + 0.5 * dt * f_n.values()[c] + dt * fb + 0.5 * noise_n.values()[c] -
                        m.background_pv().values()[c];
  }
  const EllipticSolution sol = m.elliptic().invert(q_pre, s.mass);
  const LayeredField visc = viscous_tendency(sol.psi, sol.wall, p.nu, p.mu);

  HeunReport rep;
  LayeredField q_star(g);
  for (std::size_t c = 0; c < n; ++c) {
    const double fb = 1.5 * r_n.values()[c] - 0.5 * s.beta_prev.values()[c];
    const double drift = dt * f_n.values()[c] + 2.0 * dt * fb + 2.0 * dt * visc.values()[c];
    q_star.values()[c] = s.q.values()[c] + drift + noise_n.values()[c];
    rep.drift_norm = std::max(rep.drift_norm, std::abs(drift));
    rep.noise_norm = std::max(rep.noise_norm, std::abs(noise_n.values()[c]));
  }

  // Face values of q*: the limited extrapolation from q^{n+1/2} = (q* + q^n) / 2.
  LayeredField q_half(g);
  for (std::size_t c = 0; c < n; ++c) q_half.values()[c] = 0.5 * (q_star.values()[c] + s.q.values()[c]);
  const FaceField u_half = m.face_velocity(sol.psi, sol.wall);
  FaceField u_new(g);
  kernels::extrapolate_linear(u_half.x_values(), s.velocity_half_prev.x_values(), u_new.x_values());
  kernels::extrapolate_linear(u_half.y_values(), s.velocity_half_prev.y_values(), u_new.y_values());
  FaceField adv = u_new;
  const FaceField xi_dw = sm.xi().combine(dw);
  for (std::size_t f = 0; f < adv.x_values().size(); ++f) adv.x_values()[f] += xi_dw.x_values()[f] / dt;
  for (std::size_t f = 0; f < adv.y_values().size(); ++f) adv.y_values()[f] += xi_dw.y_values()[f] / dt;
  FaceField faces(g);
  for (int l = 0; l < kLayers; ++l) {
    kernels::extrapolate_faces(g, q_half.layer(l), s.q.layer(l), s.q_faces.xf(l), s.q_faces.yf(l), adv.xf(l),
                               adv.yf(l), dt, faces.xf(l), faces.yf(l));
  }

  LayeredField heun(g);
  const LayeredField f_star = advective_divergence(faces, u_new);
  for (std::size_t c = 0; c < n; ++c) heun.values()[c] = q_half.values()[c] + 0.5 * dt * f_star.values()[c];
  for (int k = 0; k < kk; ++k) {
    const LayeredField t = sm.mode_tendency(faces, k);
    for (std::size_t c = 0; c < n; ++c) heun.values()[c] += 0.5 * dw[k] * t.values()[c];
  }

  // Bilinear order dW^2 term from expanding G_k(q*) around q^n.
  FaceField inner(g);
  for (int l = 0; l < kLayers; ++l) kernels::center_to_faces(g, noise_n.layer(l), inner.xf(l), inner.yf(l));
  LayeredField quad(g);
  for (int k = 0; k < kk; ++k) {
    const LayeredField t = advective_divergence(inner, sm.xi().mode(k));
    for (std::size_t c = 0; c < n; ++c) quad.values()[c] += 0.5 * dw[k] * t.values()[c];
  }
  for (double x : quad.values()) rep.quadratic_norm = std::max(rep.quadratic_norm, std::abs(x));

  ModelState next = s;
  sm.step(next, dw);
  double scale = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    rep.max_abs_difference = std::max(rep.max_abs_difference, std::abs(next.q.values()[c] - heun.values()[c]));
    scale = std::max(scale, std::abs(next.q.values()[c]));
  }
  rep.relative_difference = (scale > 0.0) ? rep.max_abs_difference / scale : rep.max_abs_difference;
  return rep;
}

}  // namespace qgpf
