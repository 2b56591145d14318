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

#include "wiresim/rmt_flows.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wiresim/errors.hpp"

namespace wiresim {

CMatrix FlowIncrement::assemble() const {
  const auto n = a.rows();
  CMatrix z(2 * n, 2 * n);
  z << a, b, b.conjugate(), a.conjugate();
  return z;
}

FlowIncrement sample_aniso_increment(const SigmaMatrix& sigma, double ds, Rng& rng) {
  const auto n = sigma.sigma.rows();
  if (sigma.sigma.cols() != n) throw DimensionMismatch("sigma matrix must be square");
  if (!(ds > 0.0)) throw ConfigError("flow step must be positive");
  const double off = std::sqrt(ds / (2.0 * static_cast<double>(n)));
  const double diag = std::sqrt(ds / static_cast<double>(n));
  FlowIncrement inc{CMatrix(n, n), CMatrix(n, n), ds};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double s = sigma.sigma(i, j);
      if (i == j) {
        inc.a(i, i) = Complex(0.0, s * diag * rng.normal());
      } else {
        const double re = rng.normal();
        const double im = rng.normal();
        inc.a(i, j) = s * off * Complex(re, im);
        inc.a(j, i) = -std::conj(inc.a(i, j));
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const double re = rng.normal();
      const double im = rng.normal();
      inc.b(i, j) = sigma.sigma(i, j) * off * Complex(re, im);
      inc.b(j, i) = inc.b(i, j);
    }
  }
  return inc;
}

FlowIncrement sample_mea_increment(int n, double ds, Rng& rng) {
  return sample_aniso_increment(SigmaMatrix::ones(n), ds, rng);
}

RMatrix channel_mean_square(const ChannelBasis& basis, const RMatrix& potential_covariance) {
  const int n = basis.channels();
  if (potential_covariance.rows() != basis.O.rows() || potential_covariance.cols() != basis.O.rows()) {
    throw DimensionMismatch("potential covariance has the wrong shape");
  }
  const CMatrix& o = basis.O;
  RMatrix out(n, n);
  for (int mu = 0; mu < n; ++mu) {
    for (int nu = 0; nu < n; ++nu) {
      // w_z = conj(O_{z mu}) O_{z nu}; E|V~|^2 = w* C w.
      const CVector w = o.col(mu).conjugate().cwiseProduct(o.col(nu));
      out(mu, nu) = (w.adjoint() * potential_covariance.cast<Complex>() * w)(0, 0).real();
    }
  }
  return out;
}

SigmaMatrix sigma_from_basis(const ChannelBasis& basis, const RMatrix& potential_covariance,
                             double tol) {
  const int n = basis.channels();
  const RVector s = basis.theta.array().sin().abs();
  if (s.minCoeff() < tol) throw SingularBasis("channel momentum at the band edge");
  const RMatrix ms = channel_mean_square(basis, potential_covariance);
  SigmaMatrix out{RMatrix(n, n)};
  for (int mu = 0; mu < n; ++mu) {
    for (int nu = 0; nu < n; ++nu) {
      out.sigma(mu, nu) = std::sqrt(n * ms(mu, nu) / (4.0 * s(mu) * s(nu)));
    }
  }
  return out;
}

double sigma_squared_flat_limit(double energy) {
  return 1.0 / (4.0 * (1.0 - 0.25 * energy * energy));
}

double collapse_time_scale(double energy) { return 1.0 / sigma_squared_flat_limit(energy); }

IncrementSampler mea_sampler(int n) {
  return {n, [n](double ds, Rng& rng) { return sample_mea_increment(n, ds, rng); }};
}

IncrementSampler aniso_sampler(SigmaMatrix sigma) {
  const int n = static_cast<int>(sigma.sigma.rows());
  return {n, [sigma = std::move(sigma)](double ds, Rng& rng) {
            return sample_aniso_increment(sigma, ds, rng);
          }};
}

namespace {

std::vector<long> sample_steps(const std::vector<double>& times, double s_final, double ds,
                               long n_steps) {
  std::vector<long> steps;
  if (times.empty()) {
    steps.push_back(n_steps);
    return steps;
  }
  for (double t : times) {
    if (t < 0.0 || t > s_final * (1.0 + 1e-12)) throw ConfigError("sample time outside [0, s_final]");
    steps.push_back(std::min(n_steps, std::lround(t / ds)));
  }
  if (!std::is_sorted(steps.begin(), steps.end())) throw ConfigError("sample times must be sorted");
  return steps;
}

long step_count(double s_final, double ds) {
  if (!(ds > 0.0) || !(s_final >= 0.0)) throw ConfigError("need ds > 0 and s_final >= 0");
  if (s_final > 0.0 && ds > s_final * (1.0 + 1e-12)) throw ConfigError("ds exceeds s_final");
  return std::lround(s_final / ds);
}

}  // namespace

MatrixFlowPath integrate_matrix_flow(const IncrementSampler& sampler,
                                     const MatrixFlowOptions& opts, Rng& rng) {
  const long n_steps = step_count(opts.s_final, opts.ds);
  const std::vector<long> steps = sample_steps(opts.sample_times, opts.s_final, opts.ds, n_steps);
  MatrixFlowPath path;
  CMatrix a;
  std::size_t next = 0;
  auto record = [&](long step) {
    while (next < steps.size() && steps[next] == step) {
      path.times.push_back(static_cast<double>(step) * opts.ds);
      path.samples.push_back(a);
      path.residuals.push_back(group_residuals(a));
      ++next;
    }
  };
  const CMatrix id = CMatrix::Identity(2 * sampler.channels, 2 * sampler.channels);
  a = id;
  for (long k = 0; k <= n_steps; ++k) {
    if (k > 0) {
      const CMatrix dz = sampler.draw(opts.ds, rng).assemble();
      if (opts.scheme == FlowScheme::kCayley) {
        const CMatrix rhs = (id + 0.5 * dz) * a;
        a = (id - 0.5 * dz).partialPivLu().solve(rhs);
      } else {
        a += dz * a;
        const double r = scaled_current_residual(ScaledMatrix{a, 0.0});
        if (r > opts.max_group_residual) {
          std::ostringstream msg;
          msg << "Euler-Maruyama left the group (residual " << r << ") at s = " << k * opts.ds;
          throw StepTooLarge(msg.str());
        }
      }
    }
    record(k);
  }
  return path;
}

DMPKState DMPKState::from_transmissions(const RVector& t, int beta) {
  DMPKState s;
  s.beta = beta;
  s.x.resize(t.size());
  for (Eigen::Index k = 0; k < t.size(); ++k) {
    if (!(t(k) > 0.0 && t(k) <= 1.0)) throw ConfigError("transmission eigenvalues must lie in (0, 1]");
    s.x(k) = std::asinh(std::sqrt((1.0 - t(k)) / t(k)));
  }
  return s;
}

RVector DMPKState::T() const { return x.array().cosh().square().inverse(); }

RVector DMPKState::log_T() const {
  RVector out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    out(k) = -2.0 * (x(k) + std::log1p(std::exp(-2.0 * x(k))) - std::log(2.0));
  }
  return out;
}

DMPKState ballistic_dmpk_state(int n, int beta, double eps) {
  DMPKState s;
  s.beta = beta;
  s.x.resize(n);
  for (int k = 0; k < n; ++k) {
    const double d = (k + 1) * eps;
    s.x(k) = std::asinh(std::sqrt(d / (1.0 - d)));
  }
  return s;
}

namespace {

double gamma_factor(int n, int beta) { return beta * n + 2.0 - beta; }

// (u_j + u_k) / (u_j - u_k) with u = sinh^2 x for x_j = hi > lo = x_k, given the
// difference d = hi - lo separately so that close pairs keep full precision.
// Written in terms of e^{-2x} so that nothing overflows for large x.
double pair_ratio_sorted(double hi, double lo, double d) {
  const double s = hi + lo;
  const double e_hi = -std::expm1(-2.0 * hi);
  const double e_lo = -std::expm1(-2.0 * lo);
  const double num = e_hi * e_hi + std::exp(-2.0 * d) * e_lo * e_lo;
  const double den = -std::expm1(-2.0 * d) * -std::expm1(-2.0 * s);
  return num / den;
}

double pair_ratio(double xj, double xk) {
  if (xj >= xk) return pair_ratio_sorted(xj, xk, xj - xk);
  return -pair_ratio_sorted(xk, xj, xk - xj);
}

// x / tanh x, finite at 0.
double x_over_tanh(double x) {
  if (x < 1e-4) return 1.0 + x * x / 3.0;
  return x / std::tanh(x);
}

void check_distinct(const DMPKState& state, double tol) {
  const RVector t = state.T();
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    for (Eigen::Index k = j + 1; k < t.size(); ++k) {
      if (std::abs(t(j) - t(k)) < tol) {
        throw DegenerateSpectrum("coincident transmission eigenvalues");
      }
    }
  }
}

}  // namespace

RVector dmpk_drift(const DMPKState& state, double tol) {
  check_distinct(state, tol);
  const int n = state.channels();
  const double g = gamma_factor(n, state.beta);
  const RVector t = state.T();
  RVector v(n);
  for (int k = 0; k < n; ++k) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != k) sum += pair_ratio(state.x(j), state.x(k));
    }
    v(k) = -t(k) + (2.0 * t(k) / g) * (1.0 - t(k) + 0.5 * state.beta * sum);
  }
  return v;
}

RVector dmpk_diffusion(const DMPKState& state) {
  const double g = gamma_factor(state.channels(), state.beta);
  const RVector t = state.T();
  return 4.0 * t.array().square() * (1.0 - t.array()) / g;
}

namespace {

// State is y_1 = x_1^2 plus the gaps y_{k+1} - y_k, so that near-collisions
// keep full relative precision.
class DmpkStepper {
 public:
  DmpkStepper(int n, int beta, NoiseConvention noise, int max_halvings, double max_move)
      : n_(n), beta_(beta), gamma_(gamma_factor(n, beta)), noise_(noise),
        max_halvings_(max_halvings), max_move_(max_move), y_(n), x_(n), drift_(n), amp_(n) {}

  // Advances over a step h with Brownian increment db, bisecting with
  // Brownian-bridge refinement when a gap closes or changes by more than
  // max_move of itself.
  void advance(double& y1, RVector& gaps, double h, const RVector& db, Rng& rng, int depth) {
    coefficients(y1, gaps);
    double t1 = y1 + drift_(0) * h + amp_(0) * db(0);
    RVector tg(n_ - 1);
    for (int m = 0; m + 1 < n_; ++m) {
      tg(m) = gaps(m) + (drift_(m + 1) - drift_(m)) * h + amp_(m + 1) * db(m + 1) - amp_(m) * db(m);
    }
    if (t1 < 0.0) {
      // Reflect y_1 at zero; the other positions stay put.
      if (n_ > 1) tg(0) += 2.0 * t1;
      t1 = -t1;
    }
    bool ok = std::isfinite(t1);
    bool small = true;
    for (int m = 0; m + 1 < n_ && ok; ++m) {
      if (!(tg(m) > 0.0) || !std::isfinite(tg(m))) ok = false;
      if (max_move_ > 0.0 && std::abs(tg(m) - gaps(m)) > max_move_ * gaps(m)) small = false;
    }
    if (ok && small) {
      y1 = t1;
      gaps = tg;
      return;
    }
    if (depth >= max_halvings_) {
      std::ostringstream msg;
      msg << "DMPK ordering lost after " << depth << " step halvings (h = " << h << ")";
      throw StepTooLarge(msg.str());
    }
    RVector db1(n_);
    const double spread = std::sqrt(h / 4.0);
    for (int k = 0; k < n_; ++k) db1(k) = 0.5 * db(k) + spread * rng.normal();
    const RVector db2 = db - db1;
    advance(y1, gaps, 0.5 * h, db1, rng, depth + 1);
    advance(y1, gaps, 0.5 * h, db2, rng, depth + 1);
  }

  static RVector positions(double y1, const RVector& gaps) {
    RVector y(gaps.size() + 1);
    y(0) = y1;
    for (Eigen::Index m = 0; m < gaps.size(); ++m) y(m + 1) = y(m) + gaps(m);
    return y;
  }

 private:
  void coefficients(double y1, const RVector& gaps) {
    y_ = positions(y1, gaps);
    x_ = y_.array().sqrt();
    for (int k = 0; k < n_; ++k) {
      const double x = x_(k);
      // S_k = sum_j f(j, k); pairs above k are positive, pairs below negative.
      double s = 0.0;
      double dy = 0.0;
      for (int j = k + 1; j < n_; ++j) {
        dy += gaps(j - 1);
        s += pair_ratio_sorted(x_(j), x, dy / (x_(j) + x));
      }
      dy = 0.0;
      for (int j = k - 1; j >= 0; --j) {
        dy += gaps(j);
        s -= pair_ratio_sorted(x, x_(j), dy / (x + x_(j)));
      }
      const double ch = std::cosh(x);
      const double t = x > 350.0 ? 0.0 : 1.0 / (ch * ch);
      const double xt = x_over_tanh(x);
      if (noise_ == NoiseConvention::kSqrtDiffusion) {
        drift_(k) = xt * (1.0 - t / gamma_ - beta_ * s / gamma_) + 1.0 / gamma_;
        amp_(k) = 2.0 * x / std::sqrt(gamma_);
      } else {
        const double th = std::tanh(x);
        const double r = th * th;
        const double amp_x = 2.0 * t * th / gamma_;
        const double bracket = 1.0 - (2.0 / gamma_) * (r + 0.5 * beta_ * s) +
                               4.0 * t * t * r * (2.0 * r - t) / (gamma_ * gamma_);
        drift_(k) = xt * bracket + amp_x * amp_x;
        amp_(k) = 2.0 * x * amp_x;
      }
    }
  }

  int n_;
  int beta_;
  double gamma_;
  NoiseConvention noise_;
  int max_halvings_;
  double max_move_;
  RVector y_;
  RVector x_;
  RVector drift_;
  RVector amp_;
};

}  // namespace

std::vector<DMPKState> integrate_dmpk(const DMPKState& initial, const DMPKOptions& opts, Rng& rng) {
  const int n = initial.channels();
  if (n < 1) throw ConfigError("DMPK state has no channels");
  for (int k = 1; k < n; ++k) {
    if (!(initial.x(k) > initial.x(k - 1))) throw DegenerateSpectrum("initial eigenvalues not ordered");
  }
  const long n_steps = step_count(opts.s_final, opts.ds);
  const std::vector<long> steps = sample_steps(opts.sample_times, opts.s_final, opts.ds, n_steps);
  DmpkStepper stepper(n, initial.beta, opts.noise, opts.max_halvings, opts.max_relative_move);
  double y1 = initial.x(0) * initial.x(0);
  RVector gaps(n - 1);
  for (int m = 0; m + 1 < n; ++m) {
    // (x_{m+1} - x_m)(x_{m+1} + x_m) avoids cancelling two nearby squares.
    gaps(m) = (initial.x(m + 1) - initial.x(m)) * (initial.x(m + 1) + initial.x(m));
  }
  RVector db(n);
  const double sd = std::sqrt(opts.ds);
  std::vector<DMPKState> out;
  std::size_t next = 0;
  for (long k = 0; k <= n_steps; ++k) {
    if (k > 0) {
      for (int i = 0; i < n; ++i) db(i) = sd * rng.normal();
      stepper.advance(y1, gaps, opts.ds, db, rng, 0);
    }
    while (next < steps.size() && steps[next] == k) {
      DMPKState s;
      s.time = initial.time + static_cast<double>(k) * opts.ds;
      s.beta = initial.beta;
      s.x = DmpkStepper::positions(y1, gaps).array().sqrt();
      out.push_back(std::move(s));
      ++next;
    }
  }
  return out;
}

}  // namespace wiresim
