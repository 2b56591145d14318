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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "wiresim/ensemble.hpp"
#include "wiresim/errors.hpp"
#include "wiresim/rmt_flows.hpp"
#include "wiresim/transport.hpp"

using namespace wiresim;
using wiresim::test::rel_diff;

namespace {

// Second moments E[x x^H] and E[x x^T] of the entries of a, accumulated over draws.
struct MomentAccumulator {
  CMatrix herm;
  CMatrix plain;
  int count = 0;

  explicit MomentAccumulator(int dim) : herm(CMatrix::Zero(dim, dim)), plain(CMatrix::Zero(dim, dim)) {}
  void add(const CMatrix& a) {
    const CVector x = Eigen::Map<const CVector>(a.data(), a.size());
    herm += x * x.adjoint();
    plain += x * x.transpose();
    ++count;
  }
};

ChannelBasis plane_wave_basis(int n, double theta) {
  ChannelBasis b;
  b.O.resize(n, n);
  for (int z = 0; z < n; ++z) {
    for (int mu = 0; mu < n; ++mu) b.O(z, mu) = std::polar(1.0 / std::sqrt(n), 2.0 * kPi * z * mu / n);
  }
  b.theta = RVector::Constant(n, theta);
  b.longitudinal_energy = 2.0 * b.theta.array().cos();
  b.transverse_energy = -b.longitudinal_energy;
  b.velocity = 2.0 * b.theta.array().sin();
  return b;
}

}  // namespace

TEST_CASE("MEA increment structure and variances") {
  const int n = 2;
  const double ds = 0.01;
  Rng rng(1, StreamTag::kTest, 20);
  const int draws = 1000000;
  double a01 = 0.0, a00 = 0.0, b01 = 0.0, b00 = 0.0;
  double a01_4 = 0.0;
  Complex mean_a01 = 0.0, mean_b00 = 0.0;
  for (int k = 0; k < draws; ++k) {
    const FlowIncrement inc = sample_mea_increment(n, ds, rng);
    if (k < 1000) {
      CHECK((inc.a + inc.a.adjoint()).norm() == 0.0);
      CHECK((inc.b - inc.b.transpose()).norm() == 0.0);
    }
    a01 += std::norm(inc.a(0, 1));
    a01_4 += std::norm(inc.a(0, 1)) * std::norm(inc.a(0, 1));
    a00 += std::norm(inc.a(0, 0));
    b01 += std::norm(inc.b(0, 1));
    b00 += std::norm(inc.b(0, 0));
    mean_a01 += inc.a(0, 1);
    mean_b00 += inc.b(0, 0);
  }
  const double expected = ds / n;
  // E|a|^4 = 2 (ds/N)^2 for a complex Gaussian; standard error of the mean of |a|^2.
  const double se = std::sqrt((a01_4 / draws - std::pow(a01 / draws, 2)) / draws);
  CHECK(std::abs(a01 / draws - expected) < 4 * se);
  CHECK(std::abs(b01 / draws - expected) < 4 * se);
  CHECK(std::abs(b00 / draws - expected) < 4 * se);
  // diagonal of a is i B / sqrt(N): |a_00|^2 has twice the relative spread
  CHECK(std::abs(a00 / draws - expected) < 4 * std::sqrt(2.0) * expected / std::sqrt(draws));
  CHECK(std::abs(mean_a01 / double(draws)) < 4 * std::sqrt(expected / draws));
  CHECK(std::abs(mean_b00 / double(draws)) < 4 * std::sqrt(expected / draws));

  const CMatrix full = sample_mea_increment(3, ds, rng).assemble();
  CHECK((full.topRightCorner(3, 3) - full.bottomLeftCorner(3, 3).conjugate()).norm() == 0.0);
  CHECK((full.topLeftCorner(3, 3) - full.bottomRightCorner(3, 3).conjugate()).norm() == 0.0);
}

TEST_CASE("MEA increment law is rotation invariant") {
  const int n = 2;
  Rng rng(2, StreamTag::kTest, 21);
  const CMatrix w = test::random_unitary(n, rng);
  MomentAccumulator plain(n * n), rotated(n * n);
  const int draws = 200000;
  for (int k = 0; k < draws; ++k) {
    const FlowIncrement inc = sample_mea_increment(n, 1.0, rng);
    plain.add(inc.a);
    rotated.add(w * inc.a * w.adjoint());
  }
  // entries of order 1/N; statistical error ~ 1/(N sqrt(draws))
  const double tol = 6.0 / (n * std::sqrt(double(draws)));
  CHECK((plain.herm - rotated.herm).cwiseAbs().maxCoeff() / draws < tol);
  CHECK((plain.plain - rotated.plain).cwiseAbs().maxCoeff() / draws < tol);
}

TEST_CASE("anisotropic increment") {
  const int n = 3;
  Rng r1(3, StreamTag::kTest, 22), r2(3, StreamTag::kTest, 22);
  for (int k = 0; k < 100; ++k) {
    const FlowIncrement a = sample_aniso_increment(SigmaMatrix::ones(n), 0.02, r1);
    const FlowIncrement b = sample_mea_increment(n, 0.02, r2);
    CHECK(a.a == b.a);
    CHECK(a.b == b.b);
  }

  RMatrix sigma(2, 2);
  sigma << 0.5, 1.5, 1.5, 2.0;
  Rng rng(4, StreamTag::kTest, 23);
  const int draws = 400000;
  double s01 = 0.0, s01_2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    const FlowIncrement inc = sample_aniso_increment({sigma}, 0.1, rng);
    CHECK((inc.a + inc.a.adjoint()).norm() == 0.0);
    CHECK((inc.b - inc.b.transpose()).norm() == 0.0);
    const double v = std::norm(inc.a(0, 1));
    s01 += v;
    s01_2 += v * v;
  }
  const double mean = s01 / draws;
  const double se = std::sqrt((s01_2 / draws - mean * mean) / draws);
  CHECK(std::abs(mean - 1.5 * 1.5 * 0.1 / 2) < 4 * se);
}

TEST_CASE("sigma matrix from a basis") {
  const ChannelBasis b = plane_wave_basis(4, kPi / 2);
  const SigmaMatrix s = sigma_from_basis(b, RMatrix::Identity(4, 4));
  CHECK((s.sigma.array().square() - 0.25).abs().maxCoeff() < 1e-14);

  const SigmaMatrix doubled = sigma_from_basis(b, 2.0 * RMatrix::Identity(4, 4));
  CHECK((doubled.sigma.array().square() - 2.0 * s.sigma.array().square()).abs().maxCoeff() < 1e-14);

  const ChannelBasis ring =
      diagonalize_channels(build_transverse_hamiltonian(5, 0.37 * 2 * kPi / 5, 0.5), 0.3);
  const SigmaMatrix sr = sigma_from_basis(ring, RMatrix::Identity(5, 5));
  CHECK((sr.sigma - sr.sigma.transpose()).norm() < 1e-14);
  for (int mu = 0; mu < 5; ++mu) {
    for (int nu = 0; nu < 5; ++nu) {
      const double expect =
          1.0 / (4.0 * std::sin(ring.theta(mu)) * std::sin(ring.theta(nu)));
      CHECK(sr.sigma(mu, nu) * sr.sigma(mu, nu) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  for (double e : {0.0, 0.5, 1.0, 1.5}) {
    const ChannelBasis flat =
        diagonalize_channels(build_transverse_hamiltonian(4, 0.7 * kPi / 2, 1e-7), e);
    const SigmaMatrix sf = sigma_from_basis(flat, RMatrix::Identity(4, 4));
    const double limit = 1.0 / (4.0 * (1.0 - e * e / 4.0));
    CHECK(sigma_squared_flat_limit(e) == doctest::Approx(limit).epsilon(1e-15));
    CHECK((sf.sigma.array().square() - limit).abs().maxCoeff() < 1e-5);
  }
  CHECK(collapse_time_scale(1.0) == doctest::Approx(3.0).epsilon(1e-15));

  RVector edge(2);
  edge << 1e-14, 1.0;
  CHECK_THROWS_AS(sigma_from_basis(basis_from_theta(edge), RMatrix::Identity(2, 2)), ModelError);
  edge << 0.01, 1.0;
  CHECK_THROWS_AS(sigma_from_basis(basis_from_theta(edge), RMatrix::Identity(2, 2), 0.1), SingularBasis);
}

TEST_CASE("matrix flow basics") {
  MatrixFlowOptions o;
  o.s_final = 0.0;
  o.ds = 0.01;
  Rng rng(5, StreamTag::kTest, 24);
  const MatrixFlowPath p0 = integrate_matrix_flow(mea_sampler(2), o, rng);
  REQUIRE(p0.samples.size() == 1);
  CHECK(p0.samples[0] == CMatrix::Identity(4, 4));

  o.s_final = 1.0;
  o.sample_times = {0.0, 0.5, 1.0};
  const MatrixFlowPath p = integrate_matrix_flow(mea_sampler(3), o, rng);
  REQUIRE(p.samples.size() == 3);
  CHECK(p.samples[0] == CMatrix::Identity(6, 6));
  CHECK(p.times[1] == doctest::Approx(0.5));
  for (const auto& r : p.residuals) {
    CHECK(r.current < 1e-10);
    CHECK(r.time_reversal < 1e-10);
  }

  MatrixFlowOptions em;
  em.s_final = 1.0;
  em.ds = 0.5;
  em.scheme = FlowScheme::kEulerMaruyama;
  CHECK_THROWS_AS(integrate_matrix_flow(mea_sampler(2), em, rng), StepTooLarge);

  MatrixFlowOptions bad;
  bad.s_final = 0.1;
  bad.ds = 0.5;
  CHECK_THROWS_AS(integrate_matrix_flow(mea_sampler(2), bad, rng), ConfigError);
}

TEST_CASE("matrix flow is a martingale and converges weakly in ds") {
  SdeParams p;
  p.kind = SdeKind::kMea;
  p.channels = 2;
  p.s_final = 0.5;
  p.ds = 0.01;
  SdeObservables obs;
  obs.conductance = false;
  obs.entry_means = true;
  obs.entries = {{0, 0}, {0, 2}};
  obs.orders = {2};
  const std::size_t paths = 4000;
  const EnsembleStats coarse = run_sde_ensemble(p, paths, 1, obs);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      const RunningStat& re = coarse.at(entry_name("A", i, j) + ".re");
      const RunningStat& im = coarse.at(entry_name("A", i, j) + ".im");
      const double target = i == j ? 1.0 : 0.0;
      CHECK(std::abs(re.mean() - target) < 4 * re.standard_error() + 1e-12);
      CHECK(std::abs(im.mean()) < 4 * im.standard_error() + 1e-12);
    }
  }
  p.ds = 0.005;
  const EnsembleStats fine = run_sde_ensemble(p, paths, 2, obs);
  for (const char* name : {"m2:A[0,0]", "m2:A[0,2]"}) {
    const RunningStat& a = coarse.at(name);
    const RunningStat& b = fine.at(name);
    CHECK(std::abs(a.mean() - b.mean()) < 4 * std::hypot(a.standard_error(), b.standard_error()));
  }
}

TEST_CASE("DMPK drift and diffusion") {
  DMPKState one = DMPKState::from_transmissions(RVector::Constant(1, 0.5), 1);
  CHECK(dmpk_drift(one)(0) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(dmpk_diffusion(one)(0) == doctest::Approx(0.25).epsilon(1e-14));
  DMPKState top = DMPKState::from_transmissions(RVector::Constant(1, 1.0), 1);
  CHECK(dmpk_drift(top)(0) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(dmpk_diffusion(top)(0) == 0.0);
  DMPKState bottom = DMPKState::from_transmissions(RVector::Constant(1, 1e-12), 1);
  CHECK(dmpk_diffusion(bottom)(0) < 1e-11);

  for (double t = 0.05; t < 1.0; t += 0.1) {
    CHECK(dmpk_drift(DMPKState::from_transmissions(RVector::Constant(1, t), 1))(0) <= 0.0);
  }

  // permutation equivariance against a direct evaluation of the formula
  RVector t(4);
  t << 0.9, 0.6, 0.35, 0.1;
  for (int beta : {1, 2, 4}) {
    const DMPKState st = DMPKState::from_transmissions(t, beta);
    const RVector v = dmpk_drift(st);
    const RVector d = dmpk_diffusion(st);
    const double gamma = beta * 4 + 2 - beta;
    std::vector<int> perm = {2, 0, 3, 1};
    for (int k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (int jj = 0; jj < 4; ++jj) {
        const int j = perm[jj];
        if (j == k) continue;
        sum += (t(k) + t(j) - 2 * t(k) * t(j)) / (t(k) - t(j));
      }
      const double expect = -t(k) + 2 * t(k) / gamma * (1 - t(k) + 0.5 * beta * sum);
      CHECK(v(k) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(d(k) == doctest::Approx(4 * t(k) * t(k) * (1 - t(k)) / gamma).epsilon(1e-14));
      CHECK(d(k) >= 0.0);
    }
  }
  RVector tie(2);
  tie << 0.5, 0.5;
  CHECK_THROWS_AS(dmpk_drift(DMPKState::from_transmissions(tie, 1)), DegenerateSpectrum);
}

TEST_CASE("DMPK states") {
  const DMPKState b = ballistic_dmpk_state(16, 1);
  CHECK(std::abs(b.g() - 16.0) < 16 * 1e-8);
  for (int k = 0; k < 16; ++k) CHECK(b.T()(k) == doctest::Approx(1.0 - (k + 1) * 1e-9).epsilon(1e-12));
  RVector t(3);
  t << 0.95, 0.4, 0.01;
  const DMPKState s = DMPKState::from_transmissions(t, 2);
  CHECK((s.T() - t).norm() < 1e-14);
  CHECK((s.log_T() - t.array().log().matrix()).norm() < 1e-12);
}

TEST_CASE("DMPK integration keeps order and starts from the initial state") {
  const DMPKState start = ballistic_dmpk_state(6, 1);
  DMPKOptions o;
  o.s_final = 0.0;
  o.ds = 0.01;
  Rng rng(6, StreamTag::kTest, 25);
  const auto p0 = integrate_dmpk(start, o, rng);
  REQUIRE(p0.size() == 1);
  CHECK((p0[0].x - start.x).norm() < 1e-15 * start.x.norm() + 1e-20);

  o.s_final = 4.0;
  o.ds = 0.02;
  o.sample_times = {0.5, 1.0, 2.0, 4.0};
  for (int k = 0; k < 20; ++k) {
    for (const auto& st : integrate_dmpk(start, o, rng)) {
      const RVector t = st.T();
      for (int i = 0; i < 6; ++i) {
        CHECK(t(i) > 0.0);
        CHECK(t(i) <= 1.0);
        if (i > 0) CHECK(t(i) < t(i - 1));
      }
    }
  }
}

TEST_CASE("single-channel DMPK: -ln T grows linearly") {
  // N = 1, beta = 1: Ito's formula gives d(-ln T) = ds + noise, so E(-ln T(s)) = s.
  auto run = [](double ds, std::uint64_t seed) {
    DMPKOptions d;
    d.s_final = 8.0;
    d.ds = ds;
    d.sample_times = {4.0, 8.0};
    RunningStat a, b;
    for (std::uint64_t i = 0; i < 3000; ++i) {
      Rng rng(seed, StreamTag::kDmpk, i);
      const auto path = integrate_dmpk(ballistic_dmpk_state(1, 1), d, rng);
      a.add(-path[0].log_T()(0));
      b.add(-path[1].log_T()(0));
    }
    return std::make_pair(a, b);
  };
  const auto [c4, c8] = run(0.04, 1);
  const auto [f4, f8] = run(0.01, 2);
  CHECK(std::abs(f4.mean() - 4.0) < 4 * f4.standard_error());
  CHECK(std::abs(f8.mean() - 8.0) < 4 * f8.standard_error());
  const double slope_c = (c8.mean() - c4.mean()) / 4.0;
  const double slope_f = (f8.mean() - f4.mean()) / 4.0;
  const double se = std::hypot(std::hypot(c4.standard_error(), c8.standard_error()),
                               std::hypot(f4.standard_error(), f8.standard_error())) / 4.0;
  CHECK(std::abs(slope_c - slope_f) < 4 * se);
}
