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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wiresim/random.hpp"
#include "wiresim/rmt_flows.hpp"
#include "wiresim/transport.hpp"
#include "wiresim/wire_model.hpp"

namespace wiresim {

// Streaming central moments up to order four with a pairwise merge.
class RunningStat {
 public:
  void add(double x);
  void merge(const RunningStat& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double min() const { return min_; }
  double max() const { return max_; }
  double m2() const { return m2_; }
  // Unbiased sample variance; 0 for fewer than two samples.
  double variance() const;
  double standard_error() const;
  // Large-sample standard error of variance().
  double variance_error() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m3_ = 0.0;
  double m4_ = 0.0;
  double min_ = 0.0;
  double max_ = 0.0;
};

// Named observables, kept in first-seen order.
class EnsembleStats {
 public:
  void add(const std::string& name, double value);
  // Index for repeated fast adds; stable within one EnsembleStats.
  std::size_t slot(const std::string& name) { return index_of(name); }
  void add(std::size_t slot, double value) { stats_[slot].add(value); }
  void merge(const EnsembleStats& other);

  bool contains(const std::string& name) const;
  const RunningStat& at(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }

  std::size_t samples() const { return samples_; }
  std::size_t failures() const { return failures_; }
  void count_sample() { ++samples_; }
  void count_failure() { ++failures_; }

 private:
  std::size_t index_of(const std::string& name);
  std::vector<std::string> names_;
  std::vector<RunningStat> stats_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::size_t samples_ = 0;
  std::size_t failures_ = 0;
};

struct ParallelOptions {
  // 0 picks the hardware concurrency.
  int threads = 0;
  // Realizations per work unit. Part of the result definition: chunks are
  // merged in index order, so results do not depend on the thread count.
  std::size_t chunk = 256;
  // Per-realization numerical failures tolerated before the ensemble aborts.
  std::size_t failure_budget = 0;
};

using RealizationBody = std::function<void(std::size_t index, EnsembleStats& out)>;

EnsembleStats run_ensemble(std::size_t n, const ParallelOptions& opts, const RealizationBody& body);

// Observable names shared by the engines.
std::string entry_name(const std::string& stem, int i, int j);
std::string at_time(const std::string& name, double s);

struct MicroObservables {
  bool conductance = true;
  bool log_conductance = false;
  bool spectrum = false;
  // Re/Im of every entry of A, for martingale checks.
  bool entry_means = false;
  // Moments |A_ij|^order for the listed entries and orders.
  std::vector<std::pair<int, int>> entries;
  std::vector<int> orders;
  // Transmission through composed scattering matrices instead of the log-scaled
  // transfer matrix; needed deep in the localized regime.
  bool stable_transmission = false;
  // Extra checkpoints (in slices) at which g is recorded; uses the stable route.
  std::vector<long> checkpoints;
  // Also records g_a * g_b for every checkpoint pair.
  bool checkpoint_products = false;
};

EnsembleStats run_micro_ensemble(const WireConfig& config, std::size_t n_samples,
                                 std::uint64_t master_seed, const MicroObservables& obs,
                                 const ParallelOptions& popts = {});

// Wave-basis scattering matrix of the whole wire from chunked composition; optionally
// the transmission block at each checkpoint.
ScatteringMatrix stable_scattering(const MicroscopicWire& wire, long slices, Rng& rng,
                                   const std::vector<long>& checkpoints = {},
                                   std::vector<CMatrix>* at_checkpoints = nullptr);

// Transmission block of the whole wire from chunked scattering-matrix composition.
// Consumes the same random numbers as MicroscopicWire::propagate.
CMatrix stable_transmission_block(const MicroscopicWire& wire, long slices, Rng& rng,
                                  const std::vector<long>& checkpoints = {},
                                  std::vector<CMatrix>* at_checkpoints = nullptr);

enum class SdeKind { kMea, kAniso, kDmpk };

struct SdeParams {
  SdeKind kind = SdeKind::kDmpk;
  int channels = 4;
  SigmaMatrix sigma;
  int beta = 1;
  NoiseConvention noise = NoiseConvention::kSqrtDiffusion;
  FlowScheme scheme = FlowScheme::kCayley;
  double s_final = 1.0;
  double ds = 1e-3;
  // Empty means only s_final. With several times, names carry an "@s" suffix.
  std::vector<double> sample_times;
  double dmpk_eps = 1e-9;
};

struct SdeObservables {
  bool conductance = true;
  bool spectrum = false;
  bool entry_means = false;
  std::vector<std::pair<int, int>> entries;
  std::vector<int> orders;
};

EnsembleStats run_sde_ensemble(const SdeParams& params, std::size_t n_paths,
                               std::uint64_t master_seed, const SdeObservables& obs,
                               const ParallelOptions& popts = {});

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

struct MomentRow {
  std::string observable;
  double lambda = 0.0;
  Estimate micro;
  Estimate sde;
  Estimate gap;
};

struct MomentReport {
  double s = 0.0;
  std::vector<double> lambdas;
  std::vector<std::string> observables;
  std::vector<MomentRow> rows;
  // Per observable: no gap grows by more than the error-bar allowance.
  std::vector<bool> monotone;
  // Largest |E(A) - 1| in units of its standard error, per engine (micro per lambda).
  std::vector<double> micro_mean_z;
  double sde_mean_z = 0.0;
  double error_bar_z = 3.0;

  bool all_monotone() const;
};

struct MomentOptions {
  std::vector<int> orders = {2, 4};
  std::vector<std::pair<int, int>> entries;  // empty: (0,0), (0,1), (0,N), (0,N+1)
  std::size_t n_samples = 100000;
  std::size_t n_sde_paths = 100000;
  double sde_ds = 1e-3;
  double error_bar_z = 3.0;
};

MomentReport moment_convergence_report(const WireConfig& base, const std::vector<double>& lambdas,
                                       double s, const MomentOptions& opts, std::uint64_t seed,
                                       const ParallelOptions& popts = {});

struct CovarianceEntry {
  int i = 0, j = 0, k = 0, l = 0;
  bool conjugated = false;
  bool on_pattern = false;
  Complex estimate;
  double error = 0.0;
  // s E[R_ij R_kl] (or the conjugated variant) on pattern, 0 off pattern.
  Complex predicted;
};

struct CovarianceReport {
  double lambda = 0.0;
  double s = 0.0;
  long slices = 0;
  std::vector<CovarianceEntry> entries;
  SigmaMatrix sigma;
  double max_off_pattern = 0.0;
};

// Covariances of Y = lambda sum_x Z_x over the wire.
CovarianceReport covariance_structure_report(const WireConfig& config, std::size_t n_samples,
                                             std::uint64_t seed, const ParallelOptions& popts = {});

struct LyapunovResult {
  RVector exponents;  // per slice, descending
  double pairing_residual = 0.0;
};

LyapunovResult lyapunov_spectrum(const WireConfig& config, long length, int reorth_every,
                                 std::uint64_t seed);

struct LocalizationReport {
  std::vector<double> s_values;
  std::vector<Estimate> mean_g;
  std::vector<Estimate> mean_log_g;
  // Least-squares slope of ln E(g) against s.
  double slope = 0.0;
  double slope_error = 0.0;
  // Same fit for E(ln g).
  double log_slope = 0.0;
  double log_slope_error = 0.0;
  bool decaying = false;
};

LocalizationReport localization_decay_report(const WireConfig& base,
                                             const std::vector<double>& s_values,
                                             std::size_t n_samples, std::uint64_t seed,
                                             const ParallelOptions& popts = {});

struct ConductancePoint {
  double z = 0.0;
  double s = 0.0;
  Estimate mean;
  Estimate variance;
};

// DMPK conductance statistics at s = z N for every z, from one set of paths.
std::vector<ConductancePoint> dmpk_conductance_sweep(int channels, int beta, NoiseConvention noise,
                                                     const std::vector<double>& z, double ds,
                                                     std::size_t n_paths, std::uint64_t seed,
                                                     const ParallelOptions& popts = {});

struct CollapseReport {
  SigmaMatrix sigma;
  // sqrt of the flat-hopping limit of sigma^2.
  double flat_sigma = 0.0;
  // Largest |sigma_{mu nu} / flat_sigma - 1|.
  double max_sigma_deviation = 0.0;
  double time_scale = 0.0;
  double s = 0.0;
  Estimate aniso_g;
  Estimate dmpk_g;
};

// Anisotropic flow with the sigma matrix of the configured basis, run to s, against
// DMPK at s / c.
CollapseReport collapse_report(const WireConfig& config, double s, double ds, std::size_t n_paths,
                               std::uint64_t seed, const ParallelOptions& popts = {});

}  // namespace wiresim
