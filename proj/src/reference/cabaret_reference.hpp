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

#ifndef QGPF_REFERENCE_CABARET_REFERENCE_HPP
#define QGPF_REFERENCE_CABARET_REFERENCE_HPP

#include <span>

#include "qgpf/cabaret.hpp"
#include "qgpf/xi.hpp"

// Serial straight-line CABARET step. Written index by index, without the kernel layer, so
// tests and benchmarks can compare the production path against it. Only the elliptic
// inversion is shared.

namespace qgpf::reference {

/// One step. `xi` may be null (deterministic); otherwise dw holds K increments and lambda
/// is empty or K drift values applied in the corrector over dt.
void step(const Model& model, ModelState& s, const XiBasis* xi = nullptr, std::span<const double> dw = {},
          std::span<const double> lambda = {});

/// Predictor output only: q^{n+1/2}.
LayeredField predictor(const Model& model, const ModelState& s, const XiBasis* xi = nullptr,
                       std::span<const double> dw = {});

}  // namespace qgpf::reference

#endif  // QGPF_REFERENCE_CABARET_REFERENCE_HPP
