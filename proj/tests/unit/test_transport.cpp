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

#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "wiresim/errors.hpp"
#include "wiresim/rmt_flows.hpp"
#include "wiresim/transport.hpp"
#include "wiresim/wire_model.hpp"

using namespace wiresim;
using wiresim::test::rel_diff;

namespace {

// Hyperbolic boost in the group: [[cosh x, sinh x], [sinh x, cosh x]] per channel.
CMatrix boost(const RVector& x) {
  const int n = static_cast<int>(x.size());
  CMatrix m = CMatrix::Zero(2 * n, 2 * n);
  for (int k = 0; k < n; ++k) {
    m(k, k) = m(n + k, n + k) = std::cosh(x(k));
    m(k, n + k) = m(n + k, k) = std::sinh(x(k));
  }
  return m;
}

CMatrix block_diag(const CMatrix& u) {
  const auto n = u.rows();
  CMatrix m = CMatrix::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = u;
  m.bottomRightCorner(n, n) = u.conjugate();
  return m;
}

// Random element of the group with time reversal: rotations around a boost.
CMatrix random_group_element(int n, Rng& rng, double spread = 1.0) {
  RVector x(n);
  for (int k = 0; k < n; ++k) x(k) = spread * std::abs(rng.normal());
  return block_diag(test::random_unitary(n, rng)) * boost(x) * block_diag(test::random_unitary(n, rng));
}

CMatrix mea_sample(int n, double s, std::uint64_t seed) {
  Rng rng(seed, StreamTag::kTest, 1);
  MatrixFlowOptions o;
  o.s_final = s;
  o.ds = 1e-2;
  return integrate_matrix_flow(mea_sampler(n), o, rng).samples.back();
}

}  // namespace

TEST_CASE("group residuals") {
  const GroupResiduals id = group_residuals(CMatrix::Identity(6, 6));
  CHECK(id.current == 0.0);
  CHECK(id.time_reversal == 0.0);

  RVector th(3);
  th << 0.4, 1.1, 2.5;
  const GroupResiduals free = group_residuals(free_transfer(basis_from_theta(th), 13));
  CHECK(free.current <= 1e-14);
  CHECK(free.time_reversal <= 1e-14);

  Rng rng(1, StreamTag::kTest, 10);
  const GroupResiduals junk = group_residuals(test::random_complex(6, 6, rng));
  CHECK(junk.current > 0.1);
  CHECK(junk.time_reversal > 0.1);
}

TEST_CASE("transmission spectrum") {
  const TransmissionSpectrum id = transmission_spectrum(CMatrix::Identity(8, 8));
  CHECK(id.g == 4.0);
  CHECK(id.T == RVector::Ones(4));

  RVector th(2);
  th << 0.7, 2.0;
  const TransmissionSpectrum fr = transmission_spectrum(free_transfer(basis_from_theta(th), 5));
  CHECK(fr.T(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(fr.T(1) == doctest::Approx(1.0).epsilon(1e-14));

  for (double x : {0.1, 1.0, 3.0, 10.0}) {
    const TransmissionSpectrum sp = transmission_spectrum(boost(RVector::Constant(1, x)));
    const double c = std::cosh(x);
    CHECK(sp.T(0) == doctest::Approx(1.0 / (c * c)).epsilon(1e-12));
    CHECK(sp.g == sp.T.sum());
  }

  Rng rng(2, StreamTag::kTest, 11);
  CHECK_THROWS_AS(transmission_spectrum(test::random_complex(4, 4, rng)), NotInGroup);

  // Sorted descending.
  RVector xs(3);
  xs << 0.9, 0.1, 2.0;
  const TransmissionSpectrum sorted = transmission_spectrum(boost(xs));
  CHECK(sorted.T(0) >= sorted.T(1));
  CHECK(sorted.T(1) >= sorted.T(2));
}

TEST_CASE("conductance is invariant under channel rotations") {
  Rng rng(3, StreamTag::kTest, 12);
  for (int n : {2, 3, 5}) {
    const CMatrix m = random_group_element(n, rng);
    const double g = transmission_spectrum(m).g;
    const CMatrix rotated = block_diag(test::random_unitary(n, rng)) * m *
                            block_diag(test::random_unitary(n, rng));
    CHECK(transmission_spectrum(rotated).g == doctest::Approx(g).epsilon(1e-10));
  }
}

TEST_CASE("products stay in the group") {
  Rng rng(4, StreamTag::kTest, 13);
  const CMatrix a = random_group_element(3, rng, 0.5);
  const CMatrix b = random_group_element(3, rng, 0.5);
  const GroupResiduals ra = group_residuals(a), rb = group_residuals(b);
  const GroupResiduals rab = group_residuals(a * b);
  CHECK(rab.current < 1e-12 + 10 * (ra.current + rb.current));
  CHECK(rab.time_reversal < 1e-12 + 10 * (ra.time_reversal + rb.time_reversal));
}

TEST_CASE("Cartan decomposition") {
  const CartanFactors id = cartan_decompose(CMatrix::Identity(4, 4));
  CHECK(rel_diff(id.U * id.V, CMatrix::Identity(2, 2)) < 1e-12);
  CHECK(id.T(0) == doctest::Approx(1.0));
  CHECK(id.T(1) == doctest::Approx(1.0));
  CHECK(id.degenerate);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const CMatrix m = mea_sample(2, 0.5, seed);
    const CartanFactors f = cartan_decompose(m);
    CHECK(f.reassembly_residual < 1e-8);
    CHECK(rel_diff(cartan_compose(f.U, f.T, f.V), m) < 1e-8);
    CHECK((f.U.adjoint() * f.U - CMatrix::Identity(2, 2)).norm() < 1e-10);
    CHECK((f.V.adjoint() * f.V - CMatrix::Identity(2, 2)).norm() < 1e-10);
    // canonical gauge: first nonzero entry in each row of V has a non-negative real part
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) {
        if (std::abs(f.V(r, c)) > 1e-12) {
          CHECK(f.V(r, c).real() >= 0.0);
          break;
        }
      }
    }
    // sign ambiguity: U A, A V give the same matrix for diagonal A = +-1
    CMatrix a = CMatrix::Identity(2, 2);
    a(1, 1) = -1.0;
    CHECK(rel_diff(cartan_compose(f.U * a, f.T, a * f.V), m) < 1e-8);
    // spectrum agrees with the singular-value route
    const TransmissionSpectrum sp = transmission_spectrum(m);
    CHECK(f.T.sum() == doctest::Approx(sp.g).epsilon(1e-10));
  }

  Rng rng(5, StreamTag::kTest, 14);
  for (int n : {3, 6}) {
    const CMatrix m = random_group_element(n, rng);
    const CartanFactors f = cartan_decompose(m);
    CHECK(rel_diff(cartan_compose(f.U, f.T, f.V), m) < 1e-8);
    CHECK_FALSE(f.degenerate);
  }
  CHECK_THROWS_AS(cartan_decompose(test::random_complex(4, 4, rng)), NotInGroup);
}

TEST_CASE("scattering matrix") {
  const ScatteringMatrix id = scattering_blocks(CMatrix::Identity(6, 6));
  CHECK(rel_diff(id.t, CMatrix::Identity(3, 3)) < 1e-15);
  CHECK(rel_diff(id.tp, CMatrix::Identity(3, 3)) < 1e-15);
  CHECK(id.r.norm() < 1e-15);
  CHECK(id.rp.norm() < 1e-15);

  Rng rng(6, StreamTag::kTest, 15);
  for (int n : {1, 2, 4}) {
    const CMatrix m = random_group_element(n, rng);
    const CMatrix s = scattering_from_transfer(m);
    CHECK((s.adjoint() * s - CMatrix::Identity(2 * n, 2 * n)).norm() < 1e-9);
    // time-reversal symmetric matrices give a symmetric S
    CHECK((s.transpose() - s).norm() < 1e-9);
    const ScatteringMatrix blocks = scattering_blocks(m);
    const double g = (blocks.t.adjoint() * blocks.t).trace().real();
    CHECK(g == doctest::Approx(transmission_spectrum(m).g).epsilon(1e-10));
    // eigenvalues of t* t equal the spectrum
    Eigen::SelfAdjointEigenSolver<CMatrix> es(blocks.t.adjoint() * blocks.t);
    RVector ev = es.eigenvalues().reverse();
    const RVector t = transmission_spectrum(m).T;
    CHECK((ev - t).norm() < 1e-9);
  }

  // microscopic wire, N=4, lambda=0.1, L=100
  WireConfig c;
  c.channels = 4;
  c.disorder = 0.1;
  c.length = 100;
  c.flux = 0.37 * kPi / 2;
  const MicroscopicResult r = run_microscopic(c, 9);
  const CMatrix s = scattering_from_transfer(r.transfer.value());
  CHECK((s.adjoint() * s - CMatrix::Identity(8, 8)).norm() < 1e-9);

  CHECK_THROWS_AS(scattering_blocks(test::random_complex(4, 4, rng)), NotInGroup);
}

TEST_CASE("composed scattering matrices match the transfer product") {
  Rng rng(7, StreamTag::kTest, 16);
  for (int n : {1, 3}) {
    const CMatrix m1 = random_group_element(n, rng, 0.7);
    const CMatrix m2 = random_group_element(n, rng, 0.7);
    const ScatteringMatrix s12 = compose_scattering(scattering_blocks(m1), scattering_blocks(m2));
    const ScatteringMatrix direct = scattering_blocks(m2 * m1);
    CHECK(rel_diff(s12.assemble(), direct.assemble()) < 1e-10);
  }
}

TEST_CASE("spectrum from a transmission block clamps only rounding") {
  CMatrix t = CMatrix::Identity(2, 2);
  t(0, 0) = 1.0 + 1e-9;
  const TransmissionSpectrum sp = spectrum_from_transmission(t);
  CHECK(sp.T(0) == 1.0);
  t(0, 0) = 1.001;
  CHECK_THROWS_AS(spectrum_from_transmission(t), NotInGroup);
}

TEST_CASE("long products keep a small scaled residual") {
  WireConfig c;
  c.channels = 2;
  c.disorder = 0.5;
  c.length = 4000;
  c.flux = 0.37 * kPi;
  const MicroscopicResult r = run_microscopic(c, 1);
  CHECK(r.transfer.log_scale > 10.0);
  CHECK(scaled_current_residual(r.transfer) < 1e-8);
  const TransmissionSpectrum sp = transmission_spectrum(r.transfer);
  CHECK(std::isfinite(sp.log_g));
  CHECK(sp.log_g < -10.0);
}
