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

#include <functional>
#include <vector>

#include "wiresim/random.hpp"
#include "wiresim/transport.hpp"
#include "wiresim/types.hpp"
#include "wiresim/wire_model.hpp"

namespace wiresim {

struct FlowIncrement {
  CMatrix a;
  CMatrix b;
  double ds = 0.0;

  // [[a, b], [conj(b), conj(a)]]
  CMatrix assemble() const;
};

struct SigmaMatrix {
  RMatrix sigma;

  static SigmaMatrix ones(int n) { return {RMatrix::Ones(n, n)}; }
};

FlowIncrement sample_mea_increment(int n, double ds, Rng& rng);
FlowIncrement sample_aniso_increment(const SigmaMatrix& sigma, double ds, Rng& rng);

// E|V~_{mu nu}|^2 for site potentials with the given covariance.
RMatrix channel_mean_square(const ChannelBasis& basis, const RMatrix& potential_covariance);

// sigma_{mu nu}^2 = N E|V~_{mu nu}|^2 / (4 |sin theta_mu sin theta_nu|).
SigmaMatrix sigma_from_basis(const ChannelBasis& basis, const RMatrix& potential_covariance,
                             double tol = 1e-12);

// Limit of every sigma^2 entry when the transverse hopping vanishes.
double sigma_squared_flat_limit(double energy);
// Time rescale c = 1 / sigma^2 of that limit.
double collapse_time_scale(double energy);

enum class FlowScheme { kCayley, kEulerMaruyama };

struct MatrixFlowOptions {
  double s_final = 1.0;
  double ds = 1e-3;
  // Empty means only the final time.
  std::vector<double> sample_times;
  FlowScheme scheme = FlowScheme::kCayley;
  double max_group_residual = 1e-6;
};

struct MatrixFlowPath {
  std::vector<double> times;
  std::vector<CMatrix> samples;
  std::vector<GroupResiduals> residuals;
};

struct IncrementSampler {
  int channels = 1;
  std::function<FlowIncrement(double ds, Rng& rng)> draw;
};

IncrementSampler mea_sampler(int n);
IncrementSampler aniso_sampler(SigmaMatrix sigma);

MatrixFlowPath integrate_matrix_flow(const IncrementSampler& sampler,
                                     const MatrixFlowOptions& opts, Rng& rng);

struct DMPKState {
  double time = 0.0;
  // T_k = 1 / cosh^2(x_k), with 0 <= x_1 < x_2 < ... so that T is decreasing.
  RVector x;
  int beta = 1;

  static DMPKState from_transmissions(const RVector& t, int beta);
  int channels() const { return static_cast<int>(x.size()); }
  RVector T() const;
  RVector log_T() const;
  double g() const { return T().sum(); }
};

// T_k(0) = 1 - k eps, k = 1..N.
DMPKState ballistic_dmpk_state(int n, int beta, double eps = 1e-9);

RVector dmpk_drift(const DMPKState& state, double tol = 1e-13);
RVector dmpk_diffusion(const DMPKState& state);

enum class NoiseConvention { kSqrtDiffusion, kDiffusion };

struct DMPKOptions {
  double s_final = 1.0;
  double ds = 1e-3;
  std::vector<double> sample_times;
  NoiseConvention noise = NoiseConvention::kSqrtDiffusion;
  // Number of times one step may be bisected before giving up.
  int max_halvings = 400;
  // Steps are always refined when two x_k would cross. With a positive value a
  // step is also refined when some gap y_{k+1} - y_k (y = x^2) changes by more
  // than this fraction of itself.
  double max_relative_move = 0.0;
};

std::vector<DMPKState> integrate_dmpk(const DMPKState& initial, const DMPKOptions& opts, Rng& rng);

}  // namespace wiresim
