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

#include "wiresim/wire_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "wiresim/errors.hpp"

namespace wiresim {

std::string to_string(PotentialDistribution d) {
  switch (d) {
    case PotentialDistribution::kGaussian:
      return "gaussian";
    case PotentialDistribution::kRademacher:
      return "rademacher";
    case PotentialDistribution::kUniform:
      return "uniform";
  }
  return "gaussian";
}

PotentialDistribution parse_potential_distribution(std::string_view name) {
  if (name == "gaussian") return PotentialDistribution::kGaussian;
  if (name == "rademacher") return PotentialDistribution::kRademacher;
  if (name == "uniform") return PotentialDistribution::kUniform;
  throw ConfigError("unknown potential distribution '" + std::string(name) + "'");
}

void WireConfig::validate() const {
  if (channels < 1) throw ConfigError("channel count must be >= 1");
  if (!(disorder >= 0.0) || !std::isfinite(disorder)) {
    throw ConfigError("disorder strength must be finite and >= 0");
  }
  if (!std::isfinite(energy)) throw ConfigError("energy must be finite");
  if (!std::isfinite(flux)) throw ConfigError("flux must be finite");
  if (!(transverse_hopping > 0.0)) throw ConfigError("transverse hopping must be > 0");
  if (beta != 1 && beta != 2 && beta != 4) throw ConfigError("beta must be 1, 2 or 4");
  if (length) {
    if (*length < 1) throw ConfigError("length must be a positive integer");
  } else if (rescaled_length) {
    if (!(*rescaled_length > 0.0)) throw ConfigError("rescaled length must be > 0");
    if (!(disorder > 0.0)) throw ConfigError("rescaled length needs disorder > 0");
  } else {
    throw ConfigError("either length or rescaled length must be set");
  }
}

long WireConfig::slices() const {
  if (length) return *length;
  const double x = *rescaled_length / (disorder * disorder);
  // Snap quotients that miss an integer only by rounding, e.g. 0.3 / 0.1^2.
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) return static_cast<long>(nearest);
  return static_cast<long>(std::floor(x));
}

bool WireConfig::flux_in_range() const { return flux > 0.0 && flux < 2.0 * kPi / channels; }

RVector ChannelBasis::phase_generator() const {
  const int n = channels();
  RVector g(2 * n);
  g.head(n) = theta;
  g.tail(n) = -theta;
  return g;
}

CMatrix build_transverse_hamiltonian(int n, double flux, double hopping) {
  CMatrix h = CMatrix::Zero(n, n);
  const Complex forward = hopping * std::polar(1.0, flux);
  for (int z = 0; z < n; ++z) {
    h(z, (z + 1) % n) += forward;
    h(z, (z + n - 1) % n) += std::conj(forward);
  }
  return h;
}

namespace {

void fix_phase(CMatrix& o) {
  for (Eigen::Index c = 0; c < o.cols(); ++c) {
    const double scale = o.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index r = 0; r < o.rows(); ++r) {
      if (std::abs(o(r, c)) > 1e-10 * scale) {
        const Complex phase = std::conj(o(r, c)) / std::abs(o(r, c));
        o.col(c) *= phase;
        o(r, c) = std::abs(o(r, c));
        break;
      }
    }
  }
}

void fill_momenta(ChannelBasis& b) {
  const int n = static_cast<int>(b.longitudinal_energy.size());
  b.theta.resize(n);
  b.velocity.resize(n);
  for (int mu = 0; mu < n; ++mu) {
    const double e = b.longitudinal_energy(mu);
    if (!(std::abs(e) < 2.0)) {
      std::ostringstream msg;
      msg << "channel " << mu << " has longitudinal energy " << e << " outside (-2, 2)";
      throw EllipticViolation(msg.str());
    }
    b.theta(mu) = std::acos(e / 2.0);
    b.velocity(mu) = 2.0 * std::sin(b.theta(mu));
  }
}

}  // namespace

ChannelBasis diagonalize_channels(const CMatrix& h_perp, double energy) {
  if (h_perp.rows() != h_perp.cols()) throw DimensionMismatch("transverse Hamiltonian not square");
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h_perp);
  if (solver.info() != Eigen::Success) throw NumericalError("transverse diagonalization failed");
  ChannelBasis b;
  b.O = solver.eigenvectors();
  fix_phase(b.O);
  b.transverse_energy = solver.eigenvalues();
  b.longitudinal_energy = energy - b.transverse_energy.array();
  fill_momenta(b);
  return b;
}

ChannelBasis basis_from_theta(const RVector& theta) {
  ChannelBasis b;
  const auto n = theta.size();
  b.O = CMatrix::Identity(n, n);
  b.longitudinal_energy = 2.0 * theta.array().cos();
  b.transverse_energy = -b.longitudinal_energy;
  fill_momenta(b);
  b.theta = theta;
  b.velocity = 2.0 * theta.array().sin();
  return b;
}

SpacingReport check_no_degenerate_spacings(const ChannelBasis& basis, double tol) {
  SpacingReport report;
  const int n = basis.channels();
  for (int mu = 0; mu < n; ++mu) {
    for (int nu = mu + 1; nu < n; ++nu) {
      if (std::abs(basis.longitudinal_energy(mu) - basis.longitudinal_energy(nu)) < tol) {
        report.nondegenerate_levels = false;
      }
    }
  }
  // Items a = 2 mu + (q > 0); multisets a1 <= a2 <= a3 <= a4 cover every
  // quadruple up to permutation. A multiset and its global sign flip give the
  // same residual, so only the lexicographically smaller one is kept.
  const int m = 2 * n;
  auto flip = [](int a) { return a ^ 1; };
  std::array<int, 4> a{};
  for (a[0] = 0; a[0] < m; ++a[0]) {
    for (a[1] = a[0]; a[1] < m; ++a[1]) {
      for (a[2] = a[1]; a[2] < m; ++a[2]) {
        for (a[3] = a[2]; a[3] < m; ++a[3]) {
          std::array<int, 4> f = {flip(a[0]), flip(a[1]), flip(a[2]), flip(a[3])};
          std::sort(f.begin(), f.end());
          if (f < a) continue;
          std::vector<int> balance(n, 0);
          double sum = 0.0;
          for (int i = 0; i < 4; ++i) {
            const int mu = a[i] / 2;
            const int q = (a[i] & 1) ? 1 : -1;
            balance[mu] += q;
            sum += q * basis.theta(mu);
          }
          const bool allowed =
              std::all_of(balance.begin(), balance.end(), [](int c) { return c == 0; });
          if (allowed) continue;
          const double residual = std::abs(sum - 2.0 * kPi * std::round(sum / (2.0 * kPi)));
          if (residual < tol) {
            SpacingViolation v;
            for (int i = 0; i < 4; ++i) {
              v.channels[i] = a[i] / 2;
              v.signs[i] = (a[i] & 1) ? 1 : -1;
            }
            v.residual = residual;
            report.violations.push_back(v);
          }
        }
      }
    }
  }
  return report;
}

DisorderSlice draw_slice(int n, PotentialDistribution dist, Rng& rng, long index) {
  DisorderSlice s;
  s.index = index;
  s.potential.resize(n);
  for (int z = 0; z < n; ++z) {
    switch (dist) {
      case PotentialDistribution::kGaussian:
        s.potential(z) = rng.normal();
        break;
      case PotentialDistribution::kRademacher:
        s.potential(z) = rng.sign();
        break;
      case PotentialDistribution::kUniform:
        s.potential(z) = std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
        break;
    }
  }
  return s;
}

namespace {

void check_dims(const ChannelBasis& basis, const DisorderSlice& slice) {
  if (slice.potential.size() != basis.channels() || basis.O.rows() != basis.channels()) {
    throw DimensionMismatch("slice potential length does not match channel count");
  }
}

}  // namespace

CMatrix channel_potential(const ChannelBasis& basis, const DisorderSlice& slice) {
  check_dims(basis, slice);
  return basis.O.adjoint() * slice.potential.cast<Complex>().asDiagonal() * basis.O;
}

TransferMatrix slice_transfer_position(const ChannelBasis& basis, const DisorderSlice& slice,
                                       double lambda, double energy) {
  check_dims(basis, slice);
  const int n = basis.channels();
  CMatrix t = CMatrix::Zero(2 * n, 2 * n);
  RVector e_par = energy - basis.transverse_energy.array();
  t.topLeftCorner(n, n) = e_par.cast<Complex>().asDiagonal();
  if (lambda != 0.0) t.topLeftCorner(n, n) -= lambda * channel_potential(basis, slice);
  t.topRightCorner(n, n) = -CMatrix::Identity(n, n);
  t.bottomLeftCorner(n, n) = CMatrix::Identity(n, n);
  return {t, Basis::kPosition};
}

Upsilon upsilon(const ChannelBasis& basis, double tol) {
  const int n = basis.channels();
  Upsilon u{CMatrix::Zero(2 * n, 2 * n), CMatrix::Zero(2 * n, 2 * n)};
  for (int mu = 0; mu < n; ++mu) {
    const double rho = basis.velocity(mu);
    if (!(rho > tol)) {
      throw SingularBasis("channel " + std::to_string(mu) + " has vanishing velocity");
    }
    const Complex d = 1.0 / std::sqrt(Complex(0.0, rho));
    const Complex c = std::polar(1.0, -basis.theta(mu));
    u.forward(mu, mu) = d;
    u.forward(mu, n + mu) = d;
    u.forward(n + mu, mu) = d * c;
    u.forward(n + mu, n + mu) = d * std::conj(c);
    // The 2x2 block has unit determinant.
    u.inverse(mu, mu) = d * std::conj(c);
    u.inverse(mu, n + mu) = -d;
    u.inverse(n + mu, mu) = -d * c;
    u.inverse(n + mu, n + mu) = d;
  }
  return u;
}

TransferMatrix slice_transfer_wave(const ChannelBasis& basis, const DisorderSlice& slice,
                                   double lambda, double energy) {
  const Upsilon u = upsilon(basis);
  const TransferMatrix t = slice_transfer_position(basis, slice, lambda, energy);
  return {u.inverse * t.entries * u.forward, Basis::kWave};
}

CMatrix free_transfer(const ChannelBasis& basis, long power) {
  const int n = basis.channels();
  CVector d(2 * n);
  for (int mu = 0; mu < n; ++mu) {
    d(mu) = std::polar(1.0, static_cast<double>(power) * basis.theta(mu));
    d(n + mu) = std::conj(d(mu));
  }
  return d.asDiagonal();
}

namespace {

CVector phase_diagonal(const ChannelBasis& basis, double x) {
  const int n = basis.channels();
  CVector d(2 * n);
  for (int mu = 0; mu < n; ++mu) {
    d(mu) = std::polar(1.0, x * basis.theta(mu));
    d(n + mu) = std::conj(d(mu));
  }
  return d;
}

}  // namespace

CMatrix slice_kernel(const ChannelBasis& basis, const DisorderSlice& slice, double lambda) {
  const Upsilon u = upsilon(basis);
  const int n = basis.channels();
  CMatrix v = CMatrix::Zero(2 * n, 2 * n);
  v.topLeftCorner(n, n) = channel_potential(basis, slice);
  const CVector back = phase_diagonal(basis, -1.0);
  return -lambda * back.asDiagonal() * (u.inverse * v * u.forward);
}

CMatrix interaction_increment(const ChannelBasis& basis, const DisorderSlice& slice, double lambda,
                              double energy, long x) {
  const CMatrix m = slice_transfer_wave(basis, slice, lambda, energy).entries;
  const CVector left = phase_diagonal(basis, -static_cast<double>(x + 1));
  const CVector right = phase_diagonal(basis, static_cast<double>(x));
  const auto dim = m.rows();
  return left.asDiagonal() * m * right.asDiagonal() - CMatrix::Identity(dim, dim);
}

void ScaledMatrix::renormalize() {
  const double norm = matrix.norm();
  if (norm > kRenormThreshold) {
    matrix /= norm;
    log_scale += std::log(norm);
  }
}

CMatrix ScaledMatrix::value() const { return matrix * std::exp(log_scale); }

CMatrix interaction_step(const CMatrix& a, const ChannelBasis& basis, const DisorderSlice& slice,
                         double lambda, long x) {
  if (a.rows() != 2 * basis.channels() || a.cols() != a.rows()) {
    throw DimensionMismatch("interaction matrix has the wrong shape");
  }
  if (lambda == 0.0) return a;
  const CMatrix r = slice_kernel(basis, slice, lambda);
  const CVector p = phase_diagonal(basis, static_cast<double>(x));
  const CMatrix z = p.conjugate().asDiagonal() * r * p.asDiagonal();
  return a + z * a;
}

MicroscopicWire::MicroscopicWire(const WireConfig& config, bool check_assumptions)
    : config_(config), lambda_(config.disorder) {
  config_.validate();
  basis_ = diagonalize_channels(
      build_transverse_hamiltonian(config_.channels, config_.flux, config_.transverse_hopping),
      config_.energy);
  upsilon(basis_);
  if (check_assumptions) {
    if (!config_.flux_in_range()) {
      throw AssumptionViolation("flux must lie strictly between 0 and 2 pi / N");
    }
    const SpacingReport report = check_no_degenerate_spacings(basis_);
    if (!report.passed()) {
      std::ostringstream msg;
      msg << "degenerate level spacings:";
      for (const auto& v : report.violations) {
        msg << " (";
        for (int i = 0; i < 4; ++i) {
          msg << (v.signs[i] > 0 ? "+" : "-") << v.channels[i] << (i < 3 ? "," : "");
        }
        msg << ")";
      }
      if (!report.nondegenerate_levels) msg << " repeated longitudinal energies";
      throw AssumptionViolation(msg.str());
    }
  }
  inv_sqrt_velocity_ = basis_.velocity.array().rsqrt();
}

CMatrix MicroscopicWire::kernel_block(const RVector& potential) const {
  const int n = channels();
  // W = i lambda V~ / sqrt(rho_mu rho_nu).
  CMatrix w = basis_.O.adjoint() * potential.cast<Complex>().asDiagonal() * basis_.O;
  for (int nu = 0; nu < n; ++nu) {
    for (int mu = 0; mu < n; ++mu) {
      w(mu, nu) *= Complex(0.0, lambda_ * inv_sqrt_velocity_(mu) * inv_sqrt_velocity_(nu));
    }
  }
  return w;
}

void MicroscopicWire::step(CMatrix& a, const RVector& potential, long x) const {
  if (lambda_ == 0.0) return;
  const int n = channels();
  const CMatrix w = kernel_block(potential);
  const CVector p = phase_diagonal(basis_, static_cast<double>(x));
  // With B = e^{ixG} A, lambda Z A = e^{-ixG} [[W C], [-W C]] where C = B_top + B_bottom.
  CMatrix c = p.head(n).asDiagonal() * a.topRows(n);
  c.noalias() += p.tail(n).asDiagonal() * a.bottomRows(n);
  const CMatrix wc = w * c;
  a.topRows(n).noalias() += p.head(n).conjugate().asDiagonal() * wc;
  a.bottomRows(n).noalias() -= p.tail(n).conjugate().asDiagonal() * wc;
}

void MicroscopicWire::propagate(ScaledMatrix& a, long x, long count, Rng& rng) const {
  const int n = channels();
  for (long k = 0; k < count; ++k) {
    const DisorderSlice slice = draw_slice(n, config_.potential, rng, x + k + 1);
    step(a.matrix, slice.potential, x + k);
    if ((k & 15) == 15) a.renormalize();
  }
  a.renormalize();
}

CMatrix MicroscopicWire::full_transfer(const CMatrix& a, long slices) const {
  return free_transfer(basis_, slices) * a;
}

MicroscopicResult run_microscopic(const MicroscopicWire& wire, Rng& rng) {
  MicroscopicResult out;
  out.slices = wire.config().slices();
  const int dim = 2 * wire.channels();
  out.interaction.matrix = CMatrix::Identity(dim, dim);
  wire.propagate(out.interaction, 0, out.slices, rng);
  out.transfer.matrix = wire.full_transfer(out.interaction.matrix, out.slices);
  out.transfer.log_scale = out.interaction.log_scale;
  return out;
}

MicroscopicResult run_microscopic(const WireConfig& config, std::uint64_t seed) {
  const MicroscopicWire wire(config);
  Rng rng(seed, StreamTag::kMicroscopic, 0);
  return run_microscopic(wire, rng);
}

}  // namespace wiresim
