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

#include "qgpf/cabaret.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "qgpf/kernels.hpp"
#include "qgpf/snapshot.hpp"

namespace qgpf {

void ModelParams::validate() const {
  if (!(nu >= 0.0) || !(mu >= 0.0)) throw InvalidArgument("viscosity and friction must be non-negative");
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(max_courant > 0.0)) throw InvalidArgument("Courant limit must be positive");
  if (!std::isfinite(beta) || !std::isfinite(background_u[0]) || !std::isfinite(background_u[1])) {
    throw InvalidArgument("non-finite model parameter");
  }
}

bool ModelState::all_finite() const noexcept {
  return q.all_finite() && q_faces.all_finite() && velocity.all_finite() && velocity_half_prev.all_finite() &&
         beta_prev.all_finite() && psi.all_finite() && std::isfinite(mass);
}

Model::Model(const Grid& grid, ModelParams params, std::shared_ptr<const EllipticWorkspace> elliptic)
    : grid_(grid), params_(params), elliptic_(std::move(elliptic)), q_bg_(grid) {
  params_.validate();
  if (!elliptic_) throw InvalidArgument("model needs an elliptic workspace");
  if (elliptic_->grid() != grid_) throw InvalidArgument("elliptic workspace built for a different grid");
  const auto& st = elliptic_->strat();
  const double du = params_.background_u[0] - params_.background_u[1];
  const std::array<double, kLayers> slope{st.s1 * du, -st.s2 * du};
  for (int l = 0; l < kLayers; ++l) {
    for (int j = 0; j < grid_.ny(); ++j) {
      for (int i = 0; i < grid_.nx(); ++i) q_bg_.at(l, i, j) = slope[l] * grid_.y_center(j);
    }
  }
}

FaceField Model::face_velocity(const LayeredField& psi, const std::array<double, kLayers>& wall,
                               bool with_background) const {
  FaceField vel(grid_);
  std::vector<double> nodes(grid_.nodes());
  for (int l = 0; l < kLayers; ++l) {
    kernels::node_values(grid_, psi.layer(l), wall[l], nodes);
    kernels::face_velocities(grid_, nodes, with_background ? params_.background_u[l] : 0.0, vel.xf(l), vel.yf(l));
  }
  return vel;
}

ModelState Model::make_state(const LayeredField& q_anomaly, double mass, double time) const {
  if (q_anomaly.grid() != grid_) throw InvalidArgument("PV field on a different grid");
  ModelState s;
  auto sol = elliptic_->invert(q_anomaly, mass);
  s.q = q_anomaly;
  for (std::size_t k = 0; k < s.q.values().size(); ++k) s.q.values()[k] += q_bg_.values()[k];
  s.q_faces = FaceField(grid_);
  for (int l = 0; l < kLayers; ++l) kernels::center_to_faces(grid_, s.q.layer(l), s.q_faces.xf(l), s.q_faces.yf(l));
  s.velocity = face_velocity(sol.psi, sol.wall);
  s.velocity_half_prev = s.velocity;
  s.beta_prev = beta_tendency(s.velocity, params_.beta);
  s.psi = std::move(sol.psi);
  s.wall = sol.wall;
  s.mass = mass;
  s.time = time;
  s.step = 0;
  return s;
}

ModelState Model::rest_state() const { return make_state(LayeredField(grid_), 0.0); }

ModelState Model::state_from_psi(const LayeredField& psi, const std::array<double, kLayers>& wall,
                                 double time) const {
  return make_state(pv_from_psi(psi, wall, elliptic_->strat()), mass_functional(psi), time);
}

LayeredField Model::anomaly(const ModelState& s) const {
  LayeredField a = s.q;
  for (std::size_t k = 0; k < a.values().size(); ++k) a.values()[k] -= q_bg_.values()[k];
  return a;
}

CellVelocity Model::cell_velocity(const LayeredField& psi, const std::array<double, kLayers>& wall) const {
  const FaceField vel = face_velocity(psi, wall);
  CellVelocity cv{LayeredField(grid_), LayeredField(grid_)};
  for (int l = 0; l < kLayers; ++l) kernels::cell_velocity(grid_, vel.xf(l), vel.yf(l), cv.u.layer(l), cv.v.layer(l));
  return cv;
}

EllipticSolution Model::invert(const ModelState& s) const { return elliptic_->invert(anomaly(s), s.mass); }

CellVelocity Model::cell_velocity(const ModelState& s) const {
  const EllipticSolution sol = invert(s);
  return cell_velocity(sol.psi, sol.wall);
}

HalfStep Model::predictor(const ModelState& s, const LayeredField* extra) const {
  const double dt = params_.dt;
  HalfStep h;
  h.beta_now = beta_tendency(s.velocity, params_.beta);
  h.q_half = s.q;
  LayeredField qa(grid_);
  for (int l = 0; l < kLayers; ++l) {
    auto qh = h.q_half.layer(l);
    kernels::add_flux_divergence(grid_, s.q_faces.xf(l), s.q_faces.yf(l), s.velocity.xf(l), s.velocity.yf(l),
                                 0.5 * dt, qh);
    const auto rn = h.beta_now.layer(l);
    const auto rp = s.beta_prev.layer(l);
    for (std::size_t c = 0; c < qh.size(); ++c) qh[c] += dt * (1.5 * rn[c] - 0.5 * rp[c]);
    if (extra != nullptr) {
      const auto ex = extra->layer(l);
      for (std::size_t c = 0; c < qh.size(); ++c) qh[c] += ex[c];
    }
    const auto bg = q_bg_.layer(l);
    auto a = qa.layer(l);
    for (std::size_t c = 0; c < qh.size(); ++c) a[c] = qh[c] - bg[c];
  }
  h.solution = elliptic_->invert(qa, s.mass);
  if (params_.nu != 0.0 || params_.mu != 0.0) {
    const LayeredField visc = viscous_tendency(h.solution.psi, h.solution.wall, params_.nu, params_.mu);
    for (std::size_t k = 0; k < visc.values().size(); ++k) h.q_half.values()[k] += dt * visc.values()[k];
  }
  h.velocity_half = face_velocity(h.solution.psi, h.solution.wall);
  return h;
}

Extrapolated Model::extrapolator(const ModelState& s, const HalfStep& h, const FaceField* noise_velocity) const {
  Extrapolated e;
  e.velocity = FaceField(grid_);
  kernels::extrapolate_linear(h.velocity_half.x_values(), s.velocity_half_prev.x_values(), e.velocity.x_values());
  kernels::extrapolate_linear(h.velocity_half.y_values(), s.velocity_half_prev.y_values(), e.velocity.y_values());
  FaceField advecting;
  const FaceField* adv = &e.velocity;
  if (noise_velocity != nullptr) {
    advecting = e.velocity;
    for (std::size_t k = 0; k < advecting.x_values().size(); ++k) advecting.x_values()[k] += noise_velocity->x_values()[k];
    for (std::size_t k = 0; k < advecting.y_values().size(); ++k) advecting.y_values()[k] += noise_velocity->y_values()[k];
    adv = &advecting;
  }
  e.courant = kernels::max_courant(grid_, adv->x_values(), adv->y_values(), params_.dt);
  if (!(e.courant <= params_.max_courant)) throw CflError(e.courant, params_.max_courant, s.step);
  e.q_faces = FaceField(grid_);
  for (int l = 0; l < kLayers; ++l) {
    kernels::extrapolate_faces(grid_, h.q_half.layer(l), s.q.layer(l), s.q_faces.xf(l), s.q_faces.yf(l), adv->xf(l),
                               adv->yf(l), params_.dt, e.q_faces.xf(l), e.q_faces.yf(l));
  }
  return e;
}

LayeredField Model::corrector(const HalfStep& h, const Extrapolated& e, const LayeredField* extra) const {
  LayeredField q = h.q_half;
  for (int l = 0; l < kLayers; ++l) {
    kernels::add_flux_divergence(grid_, e.q_faces.xf(l), e.q_faces.yf(l), e.velocity.xf(l), e.velocity.yf(l),
                                 0.5 * params_.dt, q.layer(l));
  }
  if (extra != nullptr) {
    for (std::size_t k = 0; k < q.values().size(); ++k) q.values()[k] += extra->values()[k];
  }
  return q;
}

void Model::commit(ModelState& s, HalfStep&& h, Extrapolated&& e, LayeredField&& q_new) const {
  if (!q_new.all_finite()) throw NumericalError("non-finite PV at step " + std::to_string(s.step));
  s.q = std::move(q_new);
  s.q_faces = std::move(e.q_faces);
  s.velocity = std::move(e.velocity);
  s.velocity_half_prev = std::move(h.velocity_half);
  s.beta_prev = std::move(h.beta_now);
  s.psi = std::move(h.solution.psi);
  s.wall = h.solution.wall;
  s.time += params_.dt;
  ++s.step;
}

void Model::step(ModelState& s) const {
  HalfStep h = predictor(s);
  Extrapolated e = extrapolator(s, h);
  LayeredField q = corrector(h, e);
  commit(s, std::move(h), std::move(e), std::move(q));
}

void Model::advance(ModelState& s, long steps) const {
  for (long n = 0; n < steps; ++n) step(s);
}

LayeredField advective_divergence(const FaceField& q_faces, const FaceField& velocity) {
  const Grid& g = q_faces.grid();
  if (velocity.grid() != g) throw InvalidArgument("face fields on different grids");
  LayeredField f(g);
  for (int l = 0; l < kLayers; ++l) {
    kernels::add_flux_divergence(g, q_faces.xf(l), q_faces.yf(l), velocity.xf(l), velocity.yf(l), 1.0, f.layer(l));
  }
  return f;
}

LayeredField beta_tendency(const FaceField& velocity, double beta) {
  const Grid& g = velocity.grid();
  LayeredField r(g);
  for (int l = 0; l < kLayers; ++l) kernels::beta_term(g, velocity.yf(l), beta, r.layer(l));
  return r;
}

LayeredField viscous_tendency(const LayeredField& psi, const std::array<double, kLayers>& wall, double nu,
                              double mu) {
  const Grid& g = psi.grid();
  LayeredField out(g);
  std::vector<double> bih(g.cells());
  std::vector<double> scratch(g.cells() + 2 * static_cast<std::size_t>(g.nx()));
  for (int l = 0; l < kLayers; ++l) {
    auto o = out.layer(l);
    if (nu != 0.0) {
      kernels::biharmonic(g, psi.layer(l), wall[l], bih, scratch);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] = nu * bih[c];
    }
    if (l == 1 && mu != 0.0) {
      kernels::laplacian(g, psi.layer(l), wall[l], bih);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] -= mu * bih[c];
    }
  }
  return out;
}

std::size_t model_state_payload_size(int nx, int ny) {
  const std::size_t cells = static_cast<std::size_t>(nx) * ny;
  const std::size_t faces = cells + static_cast<std::size_t>(nx) * (ny + 1);
  return 3 * kLayers * cells + 3 * kLayers * faces + kLayers + 3;
}

namespace {

void put(std::vector<double>& out, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); }

void take(const std::vector<double>& in, std::size_t& pos, std::span<double> v) {
  std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
  pos += v.size();
}

}  // namespace

void save_state(const std::filesystem::path& path, const ModelState& s) {
  const Grid& g = s.q.grid();
  std::vector<double> v;
  v.reserve(model_state_payload_size(g.nx(), g.ny()));
  put(v, s.q.values());
  for (const FaceField* f : {&s.q_faces, &s.velocity, &s.velocity_half_prev}) {
    put(v, f->x_values());
    put(v, f->y_values());
  }
  put(v, s.beta_prev.values());
  put(v, s.psi.values());
  v.push_back(s.wall[0]);
  v.push_back(s.wall[1]);
  v.push_back(s.mass);
  v.push_back(s.time);
  v.push_back(static_cast<double>(s.step));
  write_snapshot(path, {g.nx(), g.ny(), kLayers, ValueKind::kModelState, 1}, v);
}

ModelState load_state(const std::filesystem::path& path, const Grid& grid) {
  const Snapshot snap = read_snapshot(path);
  if (snap.header.kind != ValueKind::kModelState) throw FormatError("not a model state: " + path.string(), 16);
  if (snap.header.nx != grid.nx() || snap.header.ny != grid.ny()) throw FormatError("grid mismatch", 4);
  if (snap.header.records != 1) throw FormatError("expected a single record", 20);
  ModelState s;
  s.q = LayeredField(grid);
  s.q_faces = FaceField(grid);
  s.velocity = FaceField(grid);
  s.velocity_half_prev = FaceField(grid);
  s.beta_prev = LayeredField(grid);
  s.psi = LayeredField(grid);
  std::size_t pos = 0;
  take(snap.values, pos, s.q.values());
  for (FaceField* f : {&s.q_faces, &s.velocity, &s.velocity_half_prev}) {
    take(snap.values, pos, f->x_values());
    take(snap.values, pos, f->y_values());
  }
  take(snap.values, pos, s.beta_prev.values());
  take(snap.values, pos, s.psi.values());
  s.wall = {snap.values[pos], snap.values[pos + 1]};
  s.mass = snap.values[pos + 2];
  s.time = snap.values[pos + 3];
  s.step = static_cast<long>(snap.values[pos + 4]);
  return s;
}

std::array<double, kLayers> pv_integral(const ModelState& s) { return {integrate(s.q, 0), integrate(s.q, 1)}; }

}  // namespace qgpf
