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

#include "wiresim/transport.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "wiresim/errors.hpp"

namespace wiresim {

namespace {

int half_dim(const CMatrix& m) {
  if (m.rows() != m.cols() || m.rows() % 2 != 0 || m.rows() == 0) {
    throw DimensionMismatch("transfer matrix must be square with even dimension");
  }
  return static_cast<int>(m.rows() / 2);
}

CMatrix sz_sandwich(const CMatrix& m, int n) {
  CMatrix sm = m;
  sm.bottomRows(n) *= -1.0;
  return m.adjoint() * sm;
}

double current_defect(const CMatrix& m, int n, double sz_weight) {
  CMatrix d = sz_sandwich(m, n);
  d.topLeftCorner(n, n).diagonal().array() -= sz_weight;
  d.bottomRightCorner(n, n).diagonal().array() += sz_weight;
  return d.norm();
}

double log_sum_exp(const RVector& x) {
  const double top = x.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((x.array() - top).exp().sum());
}

void require_current(double residual, double tol) {
  if (!(residual <= tol)) {
    std::ostringstream msg;
    msg << "current-conservation residual " << residual << " exceeds " << tol;
    throw NotInGroup(msg.str());
  }
}

}  // namespace

GroupResiduals group_residuals(const CMatrix& m) {
  const int n = half_dim(m);
  const double sz_norm = std::sqrt(2.0 * n);
  GroupResiduals r;
  r.current = current_defect(m, n, 1.0) / sz_norm;
  const CMatrix flipped = sigma_x(n) * m * sigma_x(n);
  const double mn = m.norm();
  r.time_reversal = mn > 0.0 ? (flipped - m.conjugate()).norm() / mn : 0.0;
  return r;
}

double scaled_current_residual(const ScaledMatrix& m) {
  const int n = half_dim(m.matrix);
  const double sz_norm = std::sqrt(2.0 * n);
  // Everything divided by exp(2 log_scale).
  const double w = std::exp(-2.0 * m.log_scale);
  const double defect = current_defect(m.matrix, n, w);
  return defect / std::max(m.matrix.squaredNorm(), w * sz_norm);
}

TransmissionSpectrum spectrum_from_transmission(const CMatrix& t, double clamp_tol) {
  Eigen::JacobiSVD<CMatrix> svd(t);
  const RVector s = svd.singularValues();
  TransmissionSpectrum out;
  out.T = s.array().square();
  if (out.T.size() > 0 && out.T.maxCoeff() > 1.0 + clamp_tol) {
    throw NotInGroup("transmission eigenvalue above 1");
  }
  out.T = out.T.cwiseMin(1.0);
  out.log_T = out.T.array().log();
  out.g = out.T.sum();
  out.log_g = log_sum_exp(out.log_T);
  return out;
}

TransmissionSpectrum transmission_spectrum(const ScaledMatrix& m, const SpectrumOptions& opts) {
  const int n = half_dim(m.matrix);
  require_current(scaled_current_residual(m), opts.group_tol);
  Eigen::JacobiSVD<CMatrix> svd(m.matrix.topLeftCorner(n, n));
  // Descending singular values give descending T after reversal.
  const RVector s = svd.singularValues().reverse();
  TransmissionSpectrum out;
  out.log_T = -2.0 * m.log_scale - 2.0 * s.array().log();
  if (out.log_T.maxCoeff() > std::log1p(opts.clamp_tol)) {
    std::ostringstream msg;
    msg << "transmission eigenvalue " << std::exp(out.log_T.maxCoeff()) << " exceeds 1";
    throw NotInGroup(msg.str());
  }
  out.log_T = out.log_T.cwiseMin(0.0);
  out.T = out.log_T.array().exp();
  out.g = out.T.sum();
  out.log_g = log_sum_exp(out.log_T);
  return out;
}

TransmissionSpectrum transmission_spectrum(const CMatrix& m, const SpectrumOptions& opts) {
  return transmission_spectrum(ScaledMatrix{m, 0.0}, opts);
}

CMatrix cartan_compose(const CMatrix& u, const RVector& t, const CMatrix& v) {
  const auto n = t.size();
  const RVector a = t.array().rsqrt();
  const RVector b = (t.array().inverse() - 1.0).cwiseMax(0.0).sqrt();
  CMatrix m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = u * a.cast<Complex>().asDiagonal() * v;
  m.topRightCorner(n, n) = u * b.cast<Complex>().asDiagonal() * v.conjugate();
  m.bottomLeftCorner(n, n) = u.conjugate() * b.cast<Complex>().asDiagonal() * v;
  m.bottomRightCorner(n, n) = u.conjugate() * a.cast<Complex>().asDiagonal() * v.conjugate();
  return m;
}

namespace {

// Real orthogonal R and phases phi with q = R diag(e^{i phi}) R^T, for q
// symmetric and unitary. Re q and Im q commute, so a generic combination of
// them has a common eigenbasis.
void takagi_symmetric_unitary(const CMatrix& q, RMatrix& r, RVector& phi) {
  const RMatrix x = 0.5 * (q.real() + q.real().transpose());
  const RMatrix y = 0.5 * (q.imag() + q.imag().transpose());
  Eigen::SelfAdjointEigenSolver<RMatrix> es(x + 0.7548776662466927 * y);
  r = es.eigenvectors();
  phi.resize(q.rows());
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    const auto col = r.col(k);
    phi(k) = std::arg(Complex(col.dot(x * col), col.dot(y * col)));
  }
}

// Index of the first entry of `row` that is not negligible.
Eigen::Index first_nonzero(const CMatrix& v, Eigen::Index row) {
  const double scale = v.row(row).cwiseAbs().maxCoeff();
  for (Eigen::Index c = 0; c < v.cols(); ++c) {
    if (std::abs(v(row, c)) > 1e-10 * scale) return c;
  }
  return 0;
}

}  // namespace

CartanFactors cartan_decompose(const CMatrix& m, const CartanOptions& opts) {
  const int n = half_dim(m);
  const GroupResiduals res = group_residuals(m);
  const double current = scaled_current_residual(ScaledMatrix{m, 0.0});
  if (!(current <= opts.group_tol) || !(res.time_reversal <= opts.group_tol)) {
    std::ostringstream msg;
    msg << "matrix is not in the group (current " << current << ", time reversal "
        << res.time_reversal << ")";
    throw NotInGroup(msg.str());
  }
  Eigen::JacobiSVD<CMatrix> svd(m.topLeftCorner(n, n), Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Ascending singular values, i.e. descending T.
  const RVector s = svd.singularValues().reverse();
  CMatrix u = svd.matrixU().rowwise().reverse();
  CMatrix v = svd.matrixV().rowwise().reverse().adjoint();

  CartanFactors out;
  out.T = s.array().square().inverse().min(1.0);
  const CMatrix beta = m.topRightCorner(n, n);
  const double b_tol = 1e-7 * std::max(1.0, s.maxCoeff());

  // Clusters of (numerically) equal singular values.
  int start = 0;
  while (start < n) {
    int end = start + 1;
    while (end < n && s(end) - s(end - 1) <= opts.degeneracy_tol * s(end)) ++end;
    const int size = end - start;
    if (size > 1) out.degenerate = true;
    CMatrix d = u.middleCols(start, size).adjoint() * beta * v.middleRows(start, size).transpose();
    const double b_k = std::sqrt(std::max(0.0, s(start) * s(start) - 1.0));
    if (b_k > b_tol) {
      if (size == 1) {
        const Complex w = std::polar(1.0, 0.5 * std::arg(d(0, 0)));
        u.col(start) *= w;
        v.row(start) *= std::conj(w);
      } else {
        // d = b_k q with q symmetric unitary; q = W W^T with W = R e^{i phi/2}.
        RMatrix r;
        RVector phi;
        takagi_symmetric_unitary(d / b_k, r, phi);
        CMatrix w = r.cast<Complex>();
        for (int k = 0; k < size; ++k) w.col(k) *= std::polar(1.0, 0.5 * phi(k));
        u.middleCols(start, size) = (u.middleCols(start, size) * w).eval();
        v.middleRows(start, size) = (w.adjoint() * v.middleRows(start, size)).eval();
      }
      // Remaining freedom is a sign per row.
      for (int k = start; k < end; ++k) {
        const Eigen::Index c = first_nonzero(v, k);
        if (v(k, c).real() < 0.0) {
          v.row(k) *= -1.0;
          u.col(k) *= -1.0;
        }
      }
    } else {
      // Perfectly transmitting: only u v matters, a full phase per row is free.
      for (int k = start; k < end; ++k) {
        const Eigen::Index c = first_nonzero(v, k);
        const Complex w = std::polar(1.0, -std::arg(v(k, c)));
        v.row(k) *= w;
        u.col(k) *= std::conj(w);
      }
    }
    start = end;
  }
  out.U = u;
  out.V = v;
  const CMatrix back = cartan_compose(u, out.T, v);
  out.reassembly_residual = (back - m).norm() / m.norm();
  if (!(out.reassembly_residual <= opts.reassembly_tol)) {
    std::ostringstream msg;
    msg << "Cartan reassembly residual " << out.reassembly_residual;
    throw NotInGroup(msg.str());
  }
  return out;
}

CMatrix ScatteringMatrix::assemble() const {
  const auto n = r.rows();
  CMatrix s(2 * n, 2 * n);
  s << r, tp, t, rp;
  return s;
}

ScatteringMatrix scattering_blocks(const CMatrix& m, double group_tol) {
  const int n = half_dim(m);
  require_current(scaled_current_residual(ScaledMatrix{m, 0.0}), group_tol);
  const CMatrix alpha = m.topLeftCorner(n, n);
  const CMatrix beta = m.topRightCorner(n, n);
  const CMatrix gamma = m.bottomLeftCorner(n, n);
  const CMatrix delta = m.bottomRightCorner(n, n);
  Eigen::FullPivLU<CMatrix> lu_delta(delta);
  Eigen::FullPivLU<CMatrix> lu_alpha(alpha.adjoint());
  const double tiny = 1e-13;
  lu_delta.setThreshold(tiny);
  lu_alpha.setThreshold(tiny);
  if (!lu_delta.isInvertible() || !lu_alpha.isInvertible()) {
    throw BlockSingular("diagonal block of the transfer matrix is singular");
  }
  ScatteringMatrix s;
  const CMatrix id = CMatrix::Identity(n, n);
  s.tp = lu_delta.solve(id);
  s.r = -s.tp * gamma;
  s.rp = beta * s.tp;
  s.t = lu_alpha.solve(id);
  return s;
}

CMatrix scattering_from_transfer(const CMatrix& m, double group_tol) {
  return scattering_blocks(m, group_tol).assemble();
}

ScatteringMatrix compose_scattering(const ScatteringMatrix& first, const ScatteringMatrix& second) {
  const auto n = first.r.rows();
  const CMatrix id = CMatrix::Identity(n, n);
  const Eigen::PartialPivLU<CMatrix> right_loop(id - first.rp * second.r);
  const Eigen::PartialPivLU<CMatrix> left_loop(id - second.r * first.rp);
  ScatteringMatrix out;
  const CMatrix inner_t = right_loop.solve(first.t);
  out.t = second.t * inner_t;
  out.r = first.r + first.tp * second.r * inner_t;
  const CMatrix inner_tp = left_loop.solve(second.tp);
  out.tp = first.tp * inner_tp;
  out.rp = second.rp + second.t * first.rp * inner_tp;
  return out;
}

}  // namespace wiresim
