// Copyright 2026 The wiresim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "wiresim/types.hpp"
#include "wiresim/wire_model.hpp"

namespace wiresim {

struct GroupResiduals {
  double current = 0.0;
  double time_reversal = 0.0;
};

// current = |M* Sz M - Sz|_F / |Sz|_F, time_reversal = |Sx M Sx - conj(M)|_F / |M|_F.
GroupResiduals group_residuals(const CMatrix& m);

// |M* Sz M - Sz|_F / max(|M|_F^2, |Sz|_F). Stays O(eps) for long products where the
// plain residual grows with |M|^2.
double scaled_current_residual(const ScaledMatrix& m);

struct TransmissionSpectrum {
  RVector T;
  double g = 0.0;
  RVector log_T;
  double log_g = 0.0;
};

struct SpectrumOptions {
  double group_tol = 1e-8;
  double clamp_tol = 1e-7;
};

// T_k = 1 / s_k^2 from the singular values of the upper-left block.
TransmissionSpectrum transmission_spectrum(const CMatrix& m, const SpectrumOptions& opts = {});
TransmissionSpectrum transmission_spectrum(const ScaledMatrix& m, const SpectrumOptions& opts = {});

// T_k as squared singular values of a transmission block t.
TransmissionSpectrum spectrum_from_transmission(const CMatrix& t, double clamp_tol = 1e-7);

struct CartanFactors {
  CMatrix U;
  CMatrix V;
  RVector T;
  bool degenerate = false;
  double reassembly_residual = 0.0;
};

struct CartanOptions {
  double group_tol = 1e-8;
  double degeneracy_tol = 1e-8;
  double reassembly_tol = 1e-8;
};

// M = diag(U, conj U) [[T^{-1/2}, (T^{-1}-1)^{1/2}], [(T^{-1}-1)^{1/2}, T^{-1/2}]] diag(V, conj V).
CartanFactors cartan_decompose(const CMatrix& m, const CartanOptions& opts = {});
CMatrix cartan_compose(const CMatrix& u, const RVector& t, const CMatrix& v);

struct ScatteringMatrix {
  CMatrix r, t, rp, tp;
  // [[r, t'], [t, r']]
  CMatrix assemble() const;
};

ScatteringMatrix scattering_blocks(const CMatrix& m, double group_tol = 1e-8);
CMatrix scattering_from_transfer(const CMatrix& m, double group_tol = 1e-8);

// Scatterer `first` followed by `second` along the wire.
ScatteringMatrix compose_scattering(const ScatteringMatrix& first, const ScatteringMatrix& second);

}  // namespace wiresim
