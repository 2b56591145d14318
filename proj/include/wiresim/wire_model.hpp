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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wiresim/random.hpp"
#include "wiresim/types.hpp"

namespace wiresim {

enum class PotentialDistribution { kGaussian, kRademacher, kUniform };

std::string to_string(PotentialDistribution d);
PotentialDistribution parse_potential_distribution(std::string_view name);

struct WireConfig {
  double energy = 0.3;
  double disorder = 0.1;
  int channels = 2;
  // Exactly one of length / rescaled_length is used; length wins when both are set.
  std::optional<long> length;
  std::optional<double> rescaled_length = 0.5;
  double flux = 0.37 * kPi;
  double transverse_hopping = 0.5;
  PotentialDistribution potential = PotentialDistribution::kGaussian;
  int beta = 1;

  // Throws ConfigError on structural problems (N < 1, negative disorder, ...).
  void validate() const;
  // L = floor(s / lambda^2), or the explicit length.
  long slices() const;
  // True when 0 < flux < 2 pi / N.
  bool flux_in_range() const;
};

struct ChannelBasis {
  CMatrix O;
  RVector transverse_energy;
  RVector longitudinal_energy;
  RVector theta;
  RVector velocity;

  int channels() const { return static_cast<int>(theta.size()); }
  // Diagonal of G = diag(theta, -theta).
  RVector phase_generator() const;
};

// H(z, z+1) = h e^{i gamma}, H(z, z-1) = h e^{-i gamma}, indices mod N.
CMatrix build_transverse_hamiltonian(int n, double flux, double hopping);

ChannelBasis diagonalize_channels(const CMatrix& h_perp, double energy);

// Builds a basis straight from momenta; O is the identity. Handy for tests.
ChannelBasis basis_from_theta(const RVector& theta);

struct SpacingViolation {
  std::array<int, 4> channels{};
  std::array<int, 4> signs{};
  // Distance of sum_i q_i theta_i from the nearest multiple of 2 pi.
  double residual = 0.0;
};

struct SpacingReport {
  bool nondegenerate_levels = true;
  std::vector<SpacingViolation> violations;
  bool passed() const { return nondegenerate_levels && violations.empty(); }
};

SpacingReport check_no_degenerate_spacings(const ChannelBasis& basis, double tol = 1e-9);

struct DisorderSlice {
  RVector potential;
  long index = 1;
};

DisorderSlice draw_slice(int n, PotentialDistribution dist, Rng& rng, long index);

enum class Basis { kPosition, kWave };

struct TransferMatrix {
  CMatrix entries;
  Basis basis = Basis::kWave;
};

// V~ = O* diag(v) O.
CMatrix channel_potential(const ChannelBasis& basis, const DisorderSlice& slice);

TransferMatrix slice_transfer_position(const ChannelBasis& basis, const DisorderSlice& slice,
                                       double lambda, double energy);

struct Upsilon {
  CMatrix forward;
  CMatrix inverse;
};

// (i rho)^{-1/2} uses the principal square root of i rho.
Upsilon upsilon(const ChannelBasis& basis, double tol = 1e-12);

TransferMatrix slice_transfer_wave(const ChannelBasis& basis, const DisorderSlice& slice,
                                   double lambda, double energy);

// M0 = diag(e^{i theta}, e^{-i theta}) raised to the power L.
CMatrix free_transfer(const ChannelBasis& basis, long power = 1);

// lambda R = -lambda e^{-iG} Ups^{-1} [[V~,0],[0,0]] Ups.
CMatrix slice_kernel(const ChannelBasis& basis, const DisorderSlice& slice, double lambda);

// lambda Z_{x+1} = e^{-i(x+1)G} Ups^{-1} T_{x+1} Ups e^{ixG} - 1, computed from the full
// wave-basis transfer matrix.
CMatrix interaction_increment(const ChannelBasis& basis, const DisorderSlice& slice, double lambda,
                              double energy, long x);

// Matrix kept as (unit Frobenius norm matrix) * exp(log_scale) once it grows large.
struct ScaledMatrix {
  CMatrix matrix;
  double log_scale = 0.0;

  static constexpr double kRenormThreshold = 1e8;

  void renormalize();
  // Dense value; overflows for very long wires.
  CMatrix value() const;
};

// A' = (1 + lambda Z_{x+1}) A. At lambda = 0 the input is returned untouched.
CMatrix interaction_step(const CMatrix& a, const ChannelBasis& basis, const DisorderSlice& slice,
                         double lambda, long x);

// Precomputed per-wire data for fast propagation of the interaction picture.
class MicroscopicWire {
 public:
  // Checks ellipticity, the flux range and the spacing assumption.
  explicit MicroscopicWire(const WireConfig& config, bool check_assumptions = true);

  const WireConfig& config() const { return config_; }
  const ChannelBasis& basis() const { return basis_; }
  int channels() const { return basis_.channels(); }

  // Advances A by slices x, x+1, ..., x+count-1 (A holds A(x) on entry).
  void propagate(ScaledMatrix& a, long x, long count, Rng& rng) const;

  // One slice, given the potential. Used by propagate and by the tests.
  void step(CMatrix& a, const RVector& potential, long x) const;

  // W with lambda R = [[W, W], [-W, -W]] for one slice.
  CMatrix kernel_block(const RVector& potential) const;

  // M = M0^L A for a wire of L slices.
  CMatrix full_transfer(const CMatrix& a, long slices) const;

 private:
  WireConfig config_;
  ChannelBasis basis_;
  RVector inv_sqrt_velocity_;
  double lambda_;
};

struct MicroscopicResult {
  ScaledMatrix interaction;
  ScaledMatrix transfer;
  long slices = 0;
};

MicroscopicResult run_microscopic(const WireConfig& config, std::uint64_t seed);
MicroscopicResult run_microscopic(const MicroscopicWire& wire, Rng& rng);

}  // namespace wiresim
