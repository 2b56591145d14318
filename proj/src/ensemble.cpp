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

#include "wiresim/ensemble.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "wiresim/errors.hpp"

namespace wiresim {

void RunningStat::add(double x) {
  const double n1 = static_cast<double>(n_);
  ++n_;
  const double n = static_cast<double>(n_);
  const double delta = x - mean_;
  const double dn = delta / n;
  const double dn2 = dn * dn;
  const double term1 = delta * dn * n1;
  mean_ += dn;
  m4_ += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2_ - 4.0 * dn * m3_;
  m3_ += term1 * dn * (n - 2.0) - 3.0 * dn * m2_;
  m2_ += term1;
  if (n_ == 1) {
    min_ = max_ = x;
  } else {
    min_ = std::min(min_, x);
    max_ = std::max(max_, x);
  }
}

void RunningStat::merge(const RunningStat& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(o.n_);
  const double n = na + nb;
  const double d = o.mean_ - mean_;
  const double d2 = d * d;
  const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
  const double m3 = m3_ + o.m3_ + d * d2 * na * nb * (na - nb) / (n * n) +
                    3.0 * d * (na * o.m2_ - nb * m2_) / n;
  const double m4 = m4_ + o.m4_ + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                    6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) +
                    4.0 * d * (na * o.m3_ - nb * m3_) / n;
  mean_ += d * nb / n;
  m2_ = m2;
  m3_ = m3;
  m4_ = m4;
  n_ += o.n_;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
}

double RunningStat::variance() const {
  return n_ > 1 ? std::max(0.0, m2_ / static_cast<double>(n_ - 1)) : 0.0;
}

double RunningStat::standard_error() const {
  return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
}

double RunningStat::variance_error() const {
  if (n_ < 2) return 0.0;
  const double n = static_cast<double>(n_);
  const double mu2 = m2_ / n;
  const double mu4 = m4_ / n;
  return std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / n);
}

std::size_t EnsembleStats::index_of(const std::string& name) {
  const auto it = lookup_.find(name);
  if (it != lookup_.end()) return it->second;
  lookup_.emplace(name, names_.size());
  names_.push_back(name);
  stats_.emplace_back();
  return names_.size() - 1;
}

void EnsembleStats::add(const std::string& name, double value) { stats_[index_of(name)].add(value); }

void EnsembleStats::merge(const EnsembleStats& other) {
  for (std::size_t i = 0; i < other.names_.size(); ++i) {
    stats_[index_of(other.names_[i])].merge(other.stats_[i]);
  }
  samples_ += other.samples_;
  failures_ += other.failures_;
}

bool EnsembleStats::contains(const std::string& name) const { return lookup_.count(name) > 0; }

const RunningStat& EnsembleStats::at(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) throw NumericalError("no observable named '" + name + "'");
  return stats_[it->second];
}

EnsembleStats run_ensemble(std::size_t n, const ParallelOptions& opts, const RealizationBody& body) {
  const std::size_t chunk = std::max<std::size_t>(1, opts.chunk);
  const std::size_t n_chunks = (n + chunk - 1) / chunk;
  std::vector<EnsembleStats> partial(n_chunks);
  // First failure (lowest index) of each chunk.
  std::vector<std::size_t> fail_index(n_chunks, std::numeric_limits<std::size_t>::max());
  std::vector<std::exception_ptr> fail_error(n_chunks);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&]() {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks || abort.load()) return;
      EnsembleStats& out = partial[c];
      const std::size_t end = std::min(n, (c + 1) * chunk);
      for (std::size_t i = c * chunk; i < end; ++i) {
        try {
          body(i, out);
          out.count_sample();
        } catch (const NumericalError&) {
          out.count_failure();
          if (fail_index[c] == std::numeric_limits<std::size_t>::max()) {
            fail_index[c] = i;
            fail_error[c] = std::current_exception();
          }
          if (opts.failure_budget == 0) abort.store(true);
        } catch (...) {
          // Model and configuration errors are never budgeted.
          fail_index[c] = std::min(fail_index[c], i);
          fail_error[c] = std::current_exception();
          out.count_failure();
          abort.store(true);
          return;
        }
      }
    }
  };

  int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(1, n_chunks))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  EnsembleStats total;
  std::size_t failures = 0;
  for (const auto& p : partial) failures += p.failures();
  if (failures > opts.failure_budget || abort.load()) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_chunks; ++c) {
      if (fail_index[c] < fail_index[best]) best = c;
    }
    if (n_chunks > 0 && fail_error[best]) std::rethrow_exception(fail_error[best]);
    throw NumericalError("ensemble aborted");
  }
  for (const auto& p : partial) total.merge(p);
  return total;
}

std::string entry_name(const std::string& stem, int i, int j) {
  return stem + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
}

std::string at_time(const std::string& name, double s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "@%.6g", s);
  return name + buf;
}

namespace {

std::string moment_name(int order, int i, int j) {
  return "m" + std::to_string(order) + ":" + entry_name("A", i, j);
}

void record_entry_moments(EnsembleStats& out, const CMatrix& a,
                          const std::vector<std::pair<int, int>>& entries,
                          const std::vector<int>& orders, const std::string& suffix) {
  for (const auto& [i, j] : entries) {
    if (i < 0 || j < 0 || i >= a.rows() || j >= a.cols()) {
      throw ConfigError("moment entry outside the matrix");
    }
    const Complex z = a(i, j);
    const double r2 = std::norm(z);
    for (int order : orders) {
      double v = 0.0;
      switch (order) {
        case 2:
          v = r2;
          break;
        case 3:
          v = r2 * z.real();
          break;
        case 4:
          v = r2 * r2;
          break;
        default:
          throw ConfigError("moment order must be 2, 3 or 4");
      }
      out.add(moment_name(order, i, j) + suffix, v);
    }
  }
}

void record_entry_means(EnsembleStats& out, const CMatrix& a, const std::string& suffix) {
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      out.add(entry_name("A", i, j) + ".re" + suffix, a(i, j).real());
      out.add(entry_name("A", i, j) + ".im" + suffix, a(i, j).imag());
    }
  }
}

void record_spectrum(EnsembleStats& out, const TransmissionSpectrum& sp, bool conductance,
                     bool log_conductance, bool spectrum, const std::string& suffix) {
  if (conductance) out.add("g" + suffix, sp.g);
  if (log_conductance) out.add("ln_g" + suffix, sp.log_g);
  if (spectrum) {
    for (Eigen::Index k = 0; k < sp.T.size(); ++k) {
      out.add("T_" + std::to_string(k + 1) + suffix, sp.T(k));
    }
  }
}

ScatteringMatrix identity_scatterer(int n) {
  ScatteringMatrix s;
  s.r = CMatrix::Zero(n, n);
  s.rp = CMatrix::Zero(n, n);
  s.t = CMatrix::Identity(n, n);
  s.tp = CMatrix::Identity(n, n);
  return s;
}

}  // namespace

ScatteringMatrix stable_scattering(const MicroscopicWire& wire, long slices, Rng& rng,
                                   const std::vector<long>& checkpoints,
                                   std::vector<CMatrix>* at_checkpoints) {
  const int n = wire.channels();
  const RVector theta = wire.basis().theta;
  CVector phase(2 * n);
  for (int mu = 0; mu < n; ++mu) {
    phase(mu) = std::polar(1.0, theta(mu));
    phase(n + mu) = std::conj(phase(mu));
  }
  const bool disordered = wire.config().disorder != 0.0;
  ScatteringMatrix total = identity_scatterer(n);
  CMatrix chunk = CMatrix::Identity(2 * n, 2 * n);
  long in_chunk = 0;
  std::size_t next_cp = 0;
  if (at_checkpoints) at_checkpoints->clear();
  auto fold = [&]() {
    if (in_chunk == 0) return;
    total = compose_scattering(total, scattering_blocks(chunk));
    chunk.setIdentity();
    in_chunk = 0;
  };
  auto emit = [&](long x) {
    while (next_cp < checkpoints.size() && checkpoints[next_cp] == x) {
      fold();
      if (at_checkpoints) at_checkpoints->push_back(total.t);
      ++next_cp;
    }
  };
  emit(0);
  for (long x = 0; x < slices; ++x) {
    const DisorderSlice slice = draw_slice(n, wire.config().potential, rng, x + 1);
    // Wave-basis slice matrix e^{iG} (1 + lambda R).
    if (disordered) {
      const CMatrix w = wire.kernel_block(slice.potential);
      const CMatrix wc = w * (chunk.topRows(n) + chunk.bottomRows(n));
      chunk.topRows(n) += wc;
      chunk.bottomRows(n) -= wc;
    }
    chunk = phase.asDiagonal() * chunk;
    ++in_chunk;
    if (in_chunk >= 64 || chunk.norm() > 16.0) fold();
    emit(x + 1);
  }
  fold();
  return total;
}

CMatrix stable_transmission_block(const MicroscopicWire& wire, long slices, Rng& rng,
                                  const std::vector<long>& checkpoints,
                                  std::vector<CMatrix>* at_checkpoints) {
  return stable_scattering(wire, slices, rng, checkpoints, at_checkpoints).t;
}

EnsembleStats run_micro_ensemble(const WireConfig& config, std::size_t n_samples,
                                 std::uint64_t master_seed, const MicroObservables& obs,
                                 const ParallelOptions& popts) {
  const MicroscopicWire wire(config);
  const long slices = config.slices();
  const bool need_a = !obs.stable_transmission || obs.entry_means || !obs.entries.empty();
  const bool need_stable = obs.stable_transmission || !obs.checkpoints.empty();
  for (long cp : obs.checkpoints) {
    if (cp < 0 || cp > slices) throw ConfigError("checkpoint beyond the wire length");
  }
  if (!std::is_sorted(obs.checkpoints.begin(), obs.checkpoints.end())) {
    throw ConfigError("checkpoints must be sorted");
  }
  auto body = [&](std::size_t index, EnsembleStats& out) {
    if (need_a) {
      Rng rng(master_seed, StreamTag::kMicroscopic, index);
      const MicroscopicResult r = run_microscopic(wire, rng);
      if (!obs.stable_transmission && (obs.conductance || obs.log_conductance || obs.spectrum)) {
        record_spectrum(out, transmission_spectrum(r.transfer), obs.conductance,
                        obs.log_conductance, obs.spectrum, "");
      }
      if (obs.entry_means || !obs.entries.empty()) {
        const CMatrix a = r.interaction.value();
        if (obs.entry_means) record_entry_means(out, a, "");
        record_entry_moments(out, a, obs.entries, obs.orders, "");
      }
    }
    if (need_stable) {
      Rng rng(master_seed, StreamTag::kMicroscopic, index);
      std::vector<CMatrix> blocks;
      const CMatrix t = stable_transmission_block(wire, slices, rng, obs.checkpoints, &blocks);
      if (obs.stable_transmission) {
        record_spectrum(out, spectrum_from_transmission(t), obs.conductance, obs.log_conductance,
                        obs.spectrum, "");
      }
      std::vector<double> g(blocks.size());
      for (std::size_t k = 0; k < blocks.size(); ++k) {
        const TransmissionSpectrum sp = spectrum_from_transmission(blocks[k]);
        g[k] = sp.g;
        const std::string suffix = "@x=" + std::to_string(obs.checkpoints[k]);
        out.add("g" + suffix, sp.g);
        out.add("ln_g" + suffix, sp.log_g);
      }
      if (obs.checkpoint_products) {
        for (std::size_t a = 0; a < g.size(); ++a) {
          for (std::size_t b = a; b < g.size(); ++b) {
            out.add("g*g@" + std::to_string(a) + "," + std::to_string(b), g[a] * g[b]);
          }
        }
      }
    }
  };
  return run_ensemble(n_samples, popts, body);
}

EnsembleStats run_sde_ensemble(const SdeParams& params, std::size_t n_paths,
                               std::uint64_t master_seed, const SdeObservables& obs,
                               const ParallelOptions& popts) {
  if (params.channels < 1) throw ConfigError("SDE channel count must be >= 1");
  const bool suffixed = params.sample_times.size() > 1;
  auto suffix_for = [&](double s) { return suffixed ? at_time("", s) : std::string(); };

  if (params.kind == SdeKind::kDmpk) {
    if (obs.entry_means || !obs.entries.empty()) {
      throw ConfigError("the DMPK engine has no matrix entries");
    }
    DMPKOptions dopts;
    dopts.s_final = params.s_final;
    dopts.ds = params.ds;
    dopts.sample_times = params.sample_times;
    dopts.noise = params.noise;
    const DMPKState start = ballistic_dmpk_state(params.channels, params.beta, params.dmpk_eps);
    auto body = [&](std::size_t index, EnsembleStats& out) {
      Rng rng(master_seed, StreamTag::kDmpk, index);
      const std::vector<DMPKState> path = integrate_dmpk(start, dopts, rng);
      for (const auto& st : path) {
        TransmissionSpectrum sp;
        sp.T = st.T();
        sp.g = sp.T.sum();
        const std::string sfx = suffix_for(st.time);
        if (obs.conductance) out.add("g" + sfx, sp.g);
        if (obs.spectrum) {
          for (Eigen::Index k = 0; k < sp.T.size(); ++k) {
            out.add("T_" + std::to_string(k + 1) + sfx, sp.T(k));
          }
        }
      }
    };
    return run_ensemble(n_paths, popts, body);
  }

  IncrementSampler sampler;
  StreamTag tag = StreamTag::kMeaFlow;
  if (params.kind == SdeKind::kMea) {
    sampler = mea_sampler(params.channels);
  } else {
    if (params.sigma.sigma.rows() != params.channels) {
      throw ConfigError("sigma matrix does not match the channel count");
    }
    sampler = aniso_sampler(params.sigma);
    tag = StreamTag::kAnisoFlow;
  }
  MatrixFlowOptions fopts;
  fopts.s_final = params.s_final;
  fopts.ds = params.ds;
  fopts.sample_times = params.sample_times;
  fopts.scheme = params.scheme;
  auto body = [&](std::size_t index, EnsembleStats& out) {
    Rng rng(master_seed, tag, index);
    const MatrixFlowPath path = integrate_matrix_flow(sampler, fopts, rng);
    for (std::size_t k = 0; k < path.samples.size(); ++k) {
      const std::string sfx = suffix_for(path.times[k]);
      const CMatrix& a = path.samples[k];
      if (obs.conductance || obs.spectrum) {
        record_spectrum(out, transmission_spectrum(a), obs.conductance, false, obs.spectrum, sfx);
      }
      if (obs.entry_means) record_entry_means(out, a, sfx);
      record_entry_moments(out, a, obs.entries, obs.orders, sfx);
    }
  };
  return run_ensemble(n_paths, popts, body);
}

bool MomentReport::all_monotone() const {
  return std::all_of(monotone.begin(), monotone.end(), [](bool b) { return b; });
}

namespace {

Estimate difference(const RunningStat& a, const RunningStat& b) {
  return {a.mean() - b.mean(), std::hypot(a.standard_error(), b.standard_error())};
}

double identity_mean_z(const EnsembleStats& stats, int dim) {
  double worst = 0.0;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      for (const char* part : {".re", ".im"}) {
        const RunningStat& st = stats.at(entry_name("A", i, j) + part);
        const double expected = (i == j && part[1] == 'r') ? 1.0 : 0.0;
        const double dev = std::abs(st.mean() - expected);
        const double se = st.standard_error();
        const double z = se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        worst = std::max(worst, z);
      }
    }
  }
  return worst;
}

}  // namespace

MomentReport moment_convergence_report(const WireConfig& base, const std::vector<double>& lambdas,
                                       double s, const MomentOptions& opts, std::uint64_t seed,
                                       const ParallelOptions& popts) {
  if (lambdas.empty()) throw ConfigError("lambda sweep is empty");
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    if (!(lambdas[k] > 0.0)) throw ConfigError("lambda sweep values must be positive");
    if (k > 0 && !(lambdas[k] < lambdas[k - 1])) {
      throw ConfigError("lambda sweep must be strictly decreasing");
    }
  }
  const int n = base.channels;
  std::vector<std::pair<int, int>> entries = opts.entries;
  if (entries.empty()) {
    entries = {{0, 0}, {0, 1}, {0, n}, {0, n + 1}};
    if (n == 1) entries = {{0, 0}, {0, 1}};
  }
  MomentReport report;
  report.s = s;
  report.lambdas = lambdas;
  report.error_bar_z = opts.error_bar_z;
  for (const auto& [i, j] : entries) {
    for (int order : opts.orders) report.observables.push_back(moment_name(order, i, j));
  }

  // SDE reference with sigma from the channel basis; it does not depend on lambda.
  const MicroscopicWire probe(base);
  SdeParams sp;
  sp.kind = SdeKind::kAniso;
  sp.channels = n;
  sp.sigma = sigma_from_basis(probe.basis(), RMatrix::Identity(n, n));
  sp.s_final = s;
  sp.ds = opts.sde_ds;
  SdeObservables so;
  so.conductance = false;
  so.entry_means = true;
  so.entries = entries;
  so.orders = opts.orders;
  const EnsembleStats sde = run_sde_ensemble(sp, opts.n_sde_paths, splitmix64(seed), so, popts);
  report.sde_mean_z = identity_mean_z(sde, 2 * n);

  MicroObservables mo;
  mo.conductance = false;
  mo.entry_means = true;
  mo.entries = entries;
  mo.orders = opts.orders;
  std::vector<EnsembleStats> micro;
  for (std::size_t k = 0; k < lambdas.size(); ++k) {
    WireConfig cfg = base;
    cfg.disorder = lambdas[k];
    cfg.length.reset();
    cfg.rescaled_length = s;
    micro.push_back(run_micro_ensemble(cfg, opts.n_samples, splitmix64(seed + 1 + k), mo, popts));
    report.micro_mean_z.push_back(identity_mean_z(micro.back(), 2 * n));
  }

  bool any_resolved = false;
  for (const auto& name : report.observables) {
    std::vector<Estimate> gaps;
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      MomentRow row;
      row.observable = name;
      row.lambda = lambdas[k];
      const RunningStat& m = micro[k].at(name);
      const RunningStat& r = sde.at(name);
      row.micro = {m.mean(), m.standard_error()};
      row.sde = {r.mean(), r.standard_error()};
      row.gap = difference(m, r);
      gaps.push_back(row.gap);
      report.rows.push_back(row);
    }
    if (gaps.front().error <= 0.5 * std::abs(gaps.front().value)) any_resolved = true;
    bool mono = true;
    for (std::size_t k = 1; k < gaps.size(); ++k) {
      const double allowance = opts.error_bar_z * std::hypot(gaps[k].error, gaps[k - 1].error);
      if (std::abs(gaps[k].value) > std::abs(gaps[k - 1].value) + allowance) mono = false;
    }
    report.monotone.push_back(mono);
  }
  if (!any_resolved) {
    throw InsufficientSamples("no moment gap is resolved at the largest lambda; raise the sample count");
  }
  return report;
}

CovarianceReport covariance_structure_report(const WireConfig& config, std::size_t n_samples,
                                             std::uint64_t seed, const ParallelOptions& popts) {
  const MicroscopicWire wire(config);
  const int n = wire.channels();
  const int d = 2 * n;
  const long slices = config.slices();
  const double lambda = config.disorder;
  const RVector g = wire.basis().phase_generator();

  CovarianceReport report;
  report.lambda = lambda;
  report.s = lambda * lambda * static_cast<double>(slices);
  report.slices = slices;
  report.sigma = sigma_from_basis(wire.basis(), RMatrix::Identity(n, n));

  auto name = [](bool conj, int i, int j, int k, int l, const char* part) {
    return std::string(conj ? "C" : "U") + std::to_string(i) + "," + std::to_string(j) + "," +
           std::to_string(k) + "," + std::to_string(l) + part;
  };
  auto body = [&](std::size_t index, EnsembleStats& out) {
    if (out.names().empty()) {
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
              for (int l = 0; l < d; ++l) {
                out.slot(name(c == 1, i, j, k, l, ".re"));
                out.slot(name(c == 1, i, j, k, l, ".im"));
              }
    }
    Rng rng(seed, StreamTag::kCovariance, index);
    CMatrix y = CMatrix::Zero(d, d);
    for (long x = 0; x < slices; ++x) {
      const DisorderSlice slice = draw_slice(n, config.potential, rng, x + 1);
      const CMatrix w = wire.kernel_block(slice.potential);
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) {
          const Complex r = (a < n ? 1.0 : -1.0) * w(a % n, b % n);
          y(a, b) += std::polar(1.0, -static_cast<double>(x) * (g(a) - g(b))) * r;
        }
      }
    }
    std::size_t slot = 0;
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) {
              const Complex left = c == 1 ? std::conj(y(i, j)) : y(i, j);
              const Complex v = left * y(k, l);
              out.add(slot++, v.real());
              out.add(slot++, v.imag());
            }
  };
  const EnsembleStats stats = run_ensemble(n_samples, popts, body);

  // Exact second moments of R (lambda stripped): R_ab = sgn(a) i V~_{mu nu} / sqrt(rho rho').
  const CMatrix& o = wire.basis().O;
  const RVector u = wire.basis().velocity.array().rsqrt();
  auto vv = [&](int mu, int nu, int ka, int io, bool conj_first) {
    Complex sum = 0.0;
    for (int z = 0; z < o.rows(); ++z) {
      const Complex first = std::conj(o(z, mu)) * o(z, nu);
      sum += (conj_first ? std::conj(first) : first) * std::conj(o(z, ka)) * o(z, io);
    }
    return sum;
  };
  auto on_pattern = [&](double phase) {
    return std::abs(phase - 2.0 * kPi * std::round(phase / (2.0 * kPi))) < 1e-9;
  };
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l) {
            CovarianceEntry e;
            e.i = i;
            e.j = j;
            e.k = k;
            e.l = l;
            e.conjugated = c == 1;
            e.on_pattern = e.conjugated ? on_pattern(g(i) - g(j) - g(k) + g(l))
                                        : on_pattern(g(i) - g(j) + g(k) - g(l));
            const RunningStat& re = stats.at(name(e.conjugated, i, j, k, l, ".re"));
            const RunningStat& im = stats.at(name(e.conjugated, i, j, k, l, ".im"));
            e.estimate = Complex(re.mean(), im.mean());
            e.error = std::hypot(re.standard_error(), im.standard_error());
            if (e.on_pattern) {
              const double si = i < n ? 1.0 : -1.0;
              const double sk = k < n ? 1.0 : -1.0;
              const int mu = i % n, nu = j % n, ka = k % n, io = l % n;
              const double scale = u(mu) * u(nu) * u(ka) * u(io);
              // (i)(i) = -1 unconjugated; conj(i) i = 1 conjugated.
              const double sign = e.conjugated ? si * sk : -si * sk;
              e.predicted = report.s * sign * scale * vv(mu, nu, ka, io, e.conjugated);
            } else {
              report.max_off_pattern = std::max(report.max_off_pattern, std::abs(e.estimate));
            }
            report.entries.push_back(e);
          }
  return report;
}

LyapunovResult lyapunov_spectrum(const WireConfig& config, long length, int reorth_every,
                                 std::uint64_t seed) {
  if (length < 1 || reorth_every < 1) throw ConfigError("length and reorth_every must be positive");
  const MicroscopicWire wire(config);
  const int d = 2 * wire.channels();
  Rng rng(seed, StreamTag::kLyapunov, 0);
  CMatrix q = CMatrix::Identity(d, d);
  RVector sums = RVector::Zero(d);
  auto reorth = [&]() {
    Eigen::HouseholderQR<CMatrix> qr(q);
    const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int k = 0; k < d; ++k) sums(k) += std::log(std::abs(r(k, k)));
    q = qr.householderQ() * CMatrix::Identity(d, d);
  };
  for (long x = 0; x < length; ++x) {
    const DisorderSlice slice = draw_slice(wire.channels(), config.potential, rng, x + 1);
    wire.step(q, slice.potential, x);
    if ((x + 1) % reorth_every == 0) reorth();
  }
  if (length % reorth_every != 0) reorth();
  LyapunovResult out;
  out.exponents = sums / static_cast<double>(length);
  std::sort(out.exponents.data(), out.exponents.data() + d, std::greater<double>());
  for (int k = 0; k < d; ++k) {
    out.pairing_residual =
        std::max(out.pairing_residual, std::abs(out.exponents(k) + out.exponents(d - 1 - k)));
  }
  return out;
}

LocalizationReport localization_decay_report(const WireConfig& base,
                                             const std::vector<double>& s_values,
                                             std::size_t n_samples, std::uint64_t seed,
                                             const ParallelOptions& popts) {
  if (s_values.size() < 2) throw ConfigError("need at least two s values");
  const double lambda = base.disorder;
  std::vector<long> checkpoints;
  for (double s : s_values) {
    // Without disorder there is no natural length unit; s counts slices.
    const long l = lambda > 0.0 ? static_cast<long>(std::floor(s / (lambda * lambda)))
                                : std::lround(s);
    checkpoints.push_back(l);
  }
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end())) {
    throw ConfigError("s values must be increasing");
  }
  WireConfig cfg = base;
  cfg.rescaled_length.reset();
  cfg.length = std::max(1L, checkpoints.back());
  MicroObservables mo;
  mo.conductance = false;
  mo.checkpoints = checkpoints;
  mo.checkpoint_products = true;
  const EnsembleStats stats = run_micro_ensemble(cfg, n_samples, seed, mo, popts);

  LocalizationReport rep;
  rep.s_values = s_values;
  const std::size_t m = s_values.size();
  RVector logm(m), mean(m), mean_log(m);
  std::vector<double> log_err(m);
  for (std::size_t k = 0; k < m; ++k) {
    const RunningStat& lg = stats.at("ln_g@x=" + std::to_string(checkpoints[k]));
    rep.mean_log_g.push_back({lg.mean(), lg.standard_error()});
    mean_log(static_cast<Eigen::Index>(k)) = lg.mean();
    log_err[k] = lg.standard_error();
    const RunningStat& st = stats.at("g@x=" + std::to_string(checkpoints[k]));
    rep.mean_g.push_back({st.mean(), st.standard_error()});
    mean(static_cast<Eigen::Index>(k)) = st.mean();
    if (!(st.mean() > 0.0)) throw InsufficientSamples("mean conductance vanished numerically");
    logm(static_cast<Eigen::Index>(k)) = std::log(st.mean());
  }
  // Ordinary least squares; slope = sum_k w_k ln E(g_k).
  RVector s(m);
  for (std::size_t k = 0; k < m; ++k) s(static_cast<Eigen::Index>(k)) = s_values[k];
  const double sbar = s.mean();
  const RVector ds = s.array() - sbar;
  const RVector w = ds / ds.squaredNorm();
  rep.slope = w.dot(logm);
  rep.log_slope = w.dot(mean_log);
  // Bounded by fully correlated checkpoints.
  for (std::size_t k = 0; k < m; ++k) {
    rep.log_slope_error += std::abs(w(static_cast<Eigen::Index>(k))) * log_err[k];
  }
  // Delta method with the sample covariance of (g_1, ..., g_m).
  RMatrix cov(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a; b < m; ++b) {
      const double eab = stats.at("g*g@" + std::to_string(a) + "," + std::to_string(b)).mean();
      const double c = eab - mean(static_cast<Eigen::Index>(a)) * mean(static_cast<Eigen::Index>(b));
      cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = c;
      cov(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = c;
    }
  }
  const RVector v = w.cwiseQuotient(mean);
  const double n = static_cast<double>(stats.samples());
  rep.slope_error = std::sqrt(std::max(0.0, v.dot(cov * v)) / n);
  const double channels = static_cast<double>(base.channels);
  rep.decaying = rep.slope + 2.0 * rep.slope_error < 0.0 &&
                 std::abs(rep.slope) >= 1.0 / (10.0 * channels);
  return rep;
}

std::vector<ConductancePoint> dmpk_conductance_sweep(int channels, int beta, NoiseConvention noise,
                                                     const std::vector<double>& z, double ds,
                                                     std::size_t n_paths, std::uint64_t seed,
                                                     const ParallelOptions& popts) {
  if (z.empty()) throw ConfigError("conductance sweep needs at least one z");
  std::vector<double> times;
  for (double zi : z) {
    if (!(zi > 0.0)) throw ConfigError("z values must be positive");
    times.push_back(zi * channels);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  SdeParams params;
  params.kind = SdeKind::kDmpk;
  params.channels = channels;
  params.beta = beta;
  params.noise = noise;
  params.ds = ds;
  params.s_final = times.back();
  params.sample_times = times;
  SdeObservables obs;
  const EnsembleStats stats = run_sde_ensemble(params, n_paths, seed, obs, popts);
  std::vector<ConductancePoint> out;
  for (double zi : z) {
    ConductancePoint p;
    p.z = zi;
    p.s = zi * channels;
    const RunningStat& g = stats.at(times.size() > 1 ? at_time("g", p.s) : std::string("g"));
    p.mean = {g.mean(), g.standard_error()};
    p.variance = {g.variance(), g.variance_error()};
    out.push_back(p);
  }
  return out;
}

CollapseReport collapse_report(const WireConfig& config, double s, double ds, std::size_t n_paths,
                               std::uint64_t seed, const ParallelOptions& popts) {
  config.validate();
  const MicroscopicWire wire(config);
  const int n = wire.channels();
  CollapseReport r;
  r.s = s;
  r.sigma = sigma_from_basis(wire.basis(), RMatrix::Identity(n, n));
  r.flat_sigma = std::sqrt(sigma_squared_flat_limit(config.energy));
  r.max_sigma_deviation = (r.sigma.sigma.array() / r.flat_sigma - 1.0).abs().maxCoeff();
  r.time_scale = collapse_time_scale(config.energy);

  SdeParams aniso;
  aniso.kind = SdeKind::kAniso;
  aniso.channels = n;
  aniso.sigma = r.sigma;
  aniso.s_final = s;
  aniso.ds = ds;
  SdeObservables obs;
  const RunningStat ga = run_sde_ensemble(aniso, n_paths, splitmix64(seed), obs, popts).at("g");
  r.aniso_g = {ga.mean(), ga.standard_error()};

  SdeParams dmpk;
  dmpk.kind = SdeKind::kDmpk;
  dmpk.channels = n;
  dmpk.beta = config.beta;
  dmpk.s_final = s / r.time_scale;
  dmpk.ds = ds / r.time_scale;
  const RunningStat gd = run_sde_ensemble(dmpk, n_paths, splitmix64(seed + 1), obs, popts).at("g");
  r.dmpk_g = {gd.mean(), gd.standard_error()};
  return r;
}

}  // namespace wiresim
