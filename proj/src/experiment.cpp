// Copyright 2026 The wiresim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wiresim/experiment.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "wiresim/errors.hpp"
#include "wiresim/rmt_flows.hpp"
#include "wiresim/transport.hpp"

namespace wiresim {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"kind", "", "experiment kind, see experiment_kinds()", true},
      {"seed", "", "master seed (unsigned 64-bit)", true},
      {"wire.energy", "0.3", "Fermi energy E"},
      {"wire.disorder", "0.1", "disorder strength lambda"},
      {"wire.channels", "2", "strip width N"},
      {"wire.length", "", "slice count L; empty means floor(s / lambda^2)"},
      {"wire.rescaled_length", "0.5", "rescaled length s"},
      {"wire.flux", "0.37pi", "magnetic flux gamma; a trailing 'pi' multiplies by pi"},
      {"wire.hopping", "0.5", "transverse hopping h"},
      {"wire.potential", "gaussian", "site potential law: gaussian, rademacher, uniform"},
      {"wire.beta", "1", "symmetry index beta for the DMPK engine"},
      {"ensemble.samples", "1000", "realizations or paths per ensemble"},
      {"ensemble.chunk", "256", "realizations per work unit"},
      {"ensemble.failure_budget", "0", "numerical failures tolerated per ensemble"},
      {"observe.log_conductance", "false", "record ln g (micro)"},
      {"observe.spectrum", "false", "record every T_k"},
      {"observe.entry_means", "false", "record Re and Im of every entry of A"},
      {"observe.entries", "", "entries i:j for moments, comma separated"},
      {"observe.orders", "", "moment orders for observe.entries"},
      {"flow.s", "1", "final flow time"},
      {"flow.ds", "0.001", "flow time step"},
      {"flow.sample_times", "", "extra sampling times; empty means flow.s only"},
      {"flow.scheme", "cayley", "matrix flow scheme: cayley, euler"},
      {"flow.noise", "sqrt-diffusion", "DMPK noise amplitude: sqrt-diffusion, diffusion"},
      {"flow.eps", "1e-9", "splitting of the ballistic DMPK start"},
      {"moment.lambdas", "0.4,0.2,0.1", "strictly decreasing disorder sweep"},
      {"moment.s", "0.5", "rescaled length of the comparison"},
      {"moment.orders", "2,4", "moment orders"},
      {"moment.entries", "", "entries i:j; empty means 0:0,0:1,0:N,0:N+1"},
      {"moment.sde_paths", "0", "SDE paths; 0 means ensemble.samples"},
      {"moment.sde_ds", "0.001", "SDE time step"},
      {"moment.error_bar_z", "3", "error bars in standard errors"},
      {"lyapunov.length", "100000", "slices"},
      {"lyapunov.reorth_every", "10", "slices between QR steps"},
      {"localization.s_over_n", "2,3,4,5,6", "sweep of s / N"},
      {"collapse.s", "1", "flow time of the anisotropic side"},
      {"collapse.ds", "0.001", "anisotropic step; the DMPK side uses ds / c"},
      {"sweep.channels", "16", "channels of the ucf and ohm DMPK runs"},
      {"sweep.ds", "0", "DMPK step of ucf and ohm; 0 means 1e-3 N"},
      {"ucf.z", "0.4", "values of z = s / N"},
      {"ohm.z", "0.3,0.4,0.5", "values of z = s / N"},
      {"output.dir", ".", "directory for results and manifest"},
      {"output.format", "csv", "csv or json"},
  };
  return keys;
}

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "micro",    "sde-mea",      "sde-aniso",      "dmpk", "moment-convergence", "covariance-structure",
      "lyapunov", "localization", "collapse", "ucf",  "ohm"};
  return kinds;
}

namespace {

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  double factor = 1.0;
  if (t.size() >= 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
    factor = kPi;
    t = trim(t.substr(0, t.size() - 2));
    if (t.empty()) return kPi;
    if (t.back() == '*') t = trim(t.substr(0, t.size() - 1));
  }
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
  return v * factor;
}

long parse_long(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError(key + ": '" + text + "' is not an integer");
  }
  return v;
}

std::string join_meta(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (!out.empty()) out += ';';
    out += k + "=" + v;
  }
  return out;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : config_keys()) {
    if (!k.required) values_[k.name] = k.default_value;
  }
}

ExperimentConfig ExperimentConfig::parse_text(std::string_view text) {
  ExperimentConfig cfg;
  std::stringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') return parse_text(text);

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!doc.contains("config") || !doc["config"].is_object()) {
    throw ConfigError(path + ": manifest has no config object");
  }
  ExperimentConfig cfg;
  for (const auto& [k, v] : doc["config"].items()) {
    if (!v.is_string()) throw ConfigError(path + ": config value of " + k + " is not a string");
    cfg.set(k, v.get<std::string>());
  }
  return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void ExperimentConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected KEY=VALUE, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& ExperimentConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  return parse_double(key, get(key));
}

long ExperimentConfig::get_long(const std::string& key) const { return parse_long(key, get(key)); }

int ExperimentConfig::get_int(const std::string& key) const {
  const long v = get_long(key);
  if (v < -2147483647L || v > 2147483647L) throw ConfigError(key + ": out of range");
  return static_cast<int>(v);
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const std::string v = trim(get(key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(get(key), ',')) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> ExperimentConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : split(get(key), ',')) out.push_back(static_cast<int>(parse_long(key, item)));
  return out;
}

std::vector<std::pair<int, int>> ExperimentConfig::get_entries(const std::string& key) const {
  std::vector<std::pair<int, int>> out;
  for (const auto& item : split(get(key), ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key + ": expected i:j, got '" + item + "'");
    out.emplace_back(static_cast<int>(parse_long(key, item.substr(0, colon))),
                     static_cast<int>(parse_long(key, item.substr(colon + 1))));
  }
  return out;
}

std::string ExperimentConfig::kind() const {
  const std::string k = trim(get("kind"));
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) {
    throw ConfigError("unknown experiment kind '" + k + "'");
  }
  return k;
}

std::uint64_t ExperimentConfig::seed() const {
  const std::string t = trim(get("seed"));
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (t.empty() || t[0] == '-' || end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError("seed: '" + t + "' is not an unsigned integer");
  }
  return static_cast<std::uint64_t>(v);
}

void ExperimentConfig::validate(bool require_run_keys) const {
  if (require_run_keys) {
    kind();
    seed();
  }
  wire().validate();
  if (get_long("ensemble.samples") < 1) throw ConfigError("ensemble.samples must be >= 1");
  if (get_long("ensemble.chunk") < 1) throw ConfigError("ensemble.chunk must be >= 1");
  if (get_long("ensemble.failure_budget") < 0) {
    throw ConfigError("ensemble.failure_budget must be >= 0");
  }
  get_bool("observe.log_conductance");
  get_bool("observe.spectrum");
  get_bool("observe.entry_means");
  get_entries("observe.entries");
  get_ints("observe.orders");
  if (!(get_double("flow.s") > 0.0)) throw ConfigError("flow.s must be > 0");
  const double ds = get_double("flow.ds");
  if (!(ds > 0.0) || ds > get_double("flow.s")) throw ConfigError("flow.ds must be in (0, flow.s]");
  get_doubles("flow.sample_times");
  const std::string scheme = get("flow.scheme");
  if (scheme != "cayley" && scheme != "euler") throw ConfigError("flow.scheme: cayley or euler");
  const std::string noise = get("flow.noise");
  if (noise != "sqrt-diffusion" && noise != "diffusion") {
    throw ConfigError("flow.noise: sqrt-diffusion or diffusion");
  }
  if (!(get_double("flow.eps") > 0.0)) throw ConfigError("flow.eps must be > 0");
  const auto lambdas = get_doubles("moment.lambdas");
  if (lambdas.empty()) throw ConfigError("moment.lambdas is empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0) || (i > 0 && !(lambdas[i] < lambdas[i - 1]))) {
      throw ConfigError("moment.lambdas must be positive and strictly decreasing");
    }
  }
  if (!(get_double("moment.s") > 0.0)) throw ConfigError("moment.s must be > 0");
  get_ints("moment.orders");
  get_entries("moment.entries");
  if (get_long("moment.sde_paths") < 0) throw ConfigError("moment.sde_paths must be >= 0");
  if (!(get_double("moment.sde_ds") > 0.0)) throw ConfigError("moment.sde_ds must be > 0");
  if (!(get_double("moment.error_bar_z") > 0.0)) throw ConfigError("moment.error_bar_z must be > 0");
  if (get_long("lyapunov.length") < 1) throw ConfigError("lyapunov.length must be >= 1");
  if (get_long("lyapunov.reorth_every") < 1) throw ConfigError("lyapunov.reorth_every must be >= 1");
  if (get_doubles("localization.s_over_n").size() < 2) {
    throw ConfigError("localization.s_over_n needs at least two values");
  }
  if (!(get_double("collapse.s") > 0.0)) throw ConfigError("collapse.s must be > 0");
  if (!(get_double("collapse.ds") > 0.0)) throw ConfigError("collapse.ds must be > 0");
  if (get_long("sweep.channels") < 1) throw ConfigError("sweep.channels must be >= 1");
  if (get_double("sweep.ds") < 0.0) throw ConfigError("sweep.ds must be >= 0");
  get_doubles("ucf.z");
  get_doubles("ohm.z");
  const std::string format = get("output.format");
  if (format != "csv" && format != "json") throw ConfigError("output.format: csv or json");
}

WireConfig ExperimentConfig::wire() const {
  WireConfig w;
  w.energy = get_double("wire.energy");
  w.disorder = get_double("wire.disorder");
  w.channels = get_int("wire.channels");
  if (trim(get("wire.length")).empty()) {
    w.length.reset();
  } else {
    w.length = get_long("wire.length");
  }
  w.rescaled_length = get_double("wire.rescaled_length");
  w.flux = get_double("wire.flux");
  w.transverse_hopping = get_double("wire.hopping");
  w.potential = parse_potential_distribution(trim(get("wire.potential")));
  w.beta = get_int("wire.beta");
  return w;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_csv(const ExperimentResult& result) {
  std::ostringstream out;
  out << "schema_version,kind,name,estimate,stderr,count,metadata\n";
  for (const auto& r : result.rows) {
    out << kSchemaVersion << ',' << result.kind << ',' << csv_field(r.name) << ',' << format_number(r.estimate)
        << ',' << format_number(r.error) << ',' << r.count << ',' << csv_field(r.metadata) << '\n';
  }
  return out.str();
}

std::string format_json(const ExperimentResult& result) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = result.kind;
  doc["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : result.rows) {
    nlohmann::ordered_json row;
    row["name"] = r.name;
    // NaN and infinities become null.
    row["estimate"] = r.estimate;
    row["stderr"] = r.error;
    row["count"] = r.count;
    row["metadata"] = r.metadata;
    doc["rows"].push_back(row);
  }
  return doc.dump(2) + "\n";
}

namespace {

ParallelOptions parallel_options(const ExperimentConfig& cfg, int threads) {
  ParallelOptions p;
  p.threads = threads;
  p.chunk = static_cast<std::size_t>(cfg.get_long("ensemble.chunk"));
  p.failure_budget = static_cast<std::size_t>(cfg.get_long("ensemble.failure_budget"));
  return p;
}

NoiseConvention noise_of(const ExperimentConfig& cfg) {
  return cfg.get("flow.noise") == "diffusion" ? NoiseConvention::kDiffusion
                                              : NoiseConvention::kSqrtDiffusion;
}

void add_stats_rows(ExperimentResult& res, const EnsembleStats& stats, const std::string& meta) {
  for (const auto& name : stats.names()) {
    const RunningStat& st = stats.at(name);
    res.rows.push_back({name, st.mean(), st.standard_error(), st.count(), meta});
  }
  for (const auto& name : stats.names()) {
    if (name == "g" || name.rfind("g@", 0) == 0) {
      const RunningStat& st = stats.at(name);
      res.rows.push_back({"var_" + name, st.variance(), st.variance_error(), st.count(), meta});
    }
  }
  res.rows.push_back({"failures", static_cast<double>(stats.failures()), 0.0, stats.samples(), meta});
}

ExperimentResult run_sde_kind(const ExperimentConfig& cfg, const std::string& kind, int threads) {
  const WireConfig wire = cfg.wire();
  SdeParams p;
  p.channels = wire.channels;
  p.beta = wire.beta;
  p.noise = noise_of(cfg);
  p.scheme = cfg.get("flow.scheme") == "euler" ? FlowScheme::kEulerMaruyama : FlowScheme::kCayley;
  p.s_final = cfg.get_double("flow.s");
  p.ds = cfg.get_double("flow.ds");
  p.sample_times = cfg.get_doubles("flow.sample_times");
  p.dmpk_eps = cfg.get_double("flow.eps");
  if (!p.sample_times.empty()) {
    p.sample_times.push_back(p.s_final);
    std::sort(p.sample_times.begin(), p.sample_times.end());
    p.sample_times.erase(std::unique(p.sample_times.begin(), p.sample_times.end()),
                         p.sample_times.end());
  }
  if (kind == "dmpk") {
    p.kind = SdeKind::kDmpk;
  } else if (kind == "sde-mea") {
    p.kind = SdeKind::kMea;
  } else {
    p.kind = SdeKind::kAniso;
    const MicroscopicWire w(wire);
    p.sigma = sigma_from_basis(w.basis(), RMatrix::Identity(wire.channels, wire.channels));
  }
  SdeObservables obs;
  obs.spectrum = cfg.get_bool("observe.spectrum");
  obs.entry_means = cfg.get_bool("observe.entry_means");
  obs.entries = cfg.get_entries("observe.entries");
  obs.orders = cfg.get_ints("observe.orders");
  const EnsembleStats stats = run_sde_ensemble(
      p, static_cast<std::size_t>(cfg.get_long("ensemble.samples")), cfg.seed(), obs,
      parallel_options(cfg, threads));
  ExperimentResult res{kind, {}};
  add_stats_rows(res, stats, join_meta({{"s", format_number(p.s_final)}, {"ds", format_number(p.ds)}}));
  return res;
}

ExperimentResult run_micro_kind(const ExperimentConfig& cfg, int threads) {
  const WireConfig wire = cfg.wire();
  MicroObservables obs;
  obs.log_conductance = cfg.get_bool("observe.log_conductance");
  obs.spectrum = cfg.get_bool("observe.spectrum");
  obs.entry_means = cfg.get_bool("observe.entry_means");
  obs.entries = cfg.get_entries("observe.entries");
  obs.orders = cfg.get_ints("observe.orders");
  const EnsembleStats stats =
      run_micro_ensemble(wire, static_cast<std::size_t>(cfg.get_long("ensemble.samples")),
                         cfg.seed(), obs, parallel_options(cfg, threads));
  ExperimentResult res{"micro", {}};
  add_stats_rows(res, stats, join_meta({{"slices", std::to_string(wire.slices())}}));
  return res;
}

ExperimentResult run_moment_kind(const ExperimentConfig& cfg, int threads) {
  MomentOptions opts;
  opts.orders = cfg.get_ints("moment.orders");
  opts.entries = cfg.get_entries("moment.entries");
  opts.n_samples = static_cast<std::size_t>(cfg.get_long("ensemble.samples"));
  const long sde_paths = cfg.get_long("moment.sde_paths");
  opts.n_sde_paths = sde_paths > 0 ? static_cast<std::size_t>(sde_paths) : opts.n_samples;
  opts.sde_ds = cfg.get_double("moment.sde_ds");
  opts.error_bar_z = cfg.get_double("moment.error_bar_z");
  const MomentReport rep =
      moment_convergence_report(cfg.wire(), cfg.get_doubles("moment.lambdas"),
                                cfg.get_double("moment.s"), opts, cfg.seed(),
                                parallel_options(cfg, threads));
  ExperimentResult res{"moment-convergence", {}};
  for (const auto& row : rep.rows) {
    const std::string meta = join_meta({{"lambda", format_number(row.lambda)}});
    res.rows.push_back({"micro:" + row.observable, row.micro.value, row.micro.error,
                        opts.n_samples, meta});
    res.rows.push_back({"sde:" + row.observable, row.sde.value, row.sde.error, opts.n_sde_paths,
                        meta});
    res.rows.push_back({"gap:" + row.observable, row.gap.value, row.gap.error, 0, meta});
  }
  for (std::size_t i = 0; i < rep.observables.size(); ++i) {
    res.rows.push_back({"monotone:" + rep.observables[i], rep.monotone[i] ? 1.0 : 0.0, 0.0, 0,
                        join_meta({{"error_bar_z", format_number(rep.error_bar_z)}})});
  }
  for (std::size_t k = 0; k < rep.micro_mean_z.size() && k < rep.lambdas.size(); ++k) {
    res.rows.push_back({"mean_z:micro", rep.micro_mean_z[k], 0.0, opts.n_samples,
                        join_meta({{"lambda", format_number(rep.lambdas[k])}})});
  }
  res.rows.push_back({"mean_z:sde", rep.sde_mean_z, 0.0, opts.n_sde_paths, ""});
  return res;
}

ExperimentResult run_covariance_kind(const ExperimentConfig& cfg, int threads) {
  const CovarianceReport rep = covariance_structure_report(
      cfg.wire(), static_cast<std::size_t>(cfg.get_long("ensemble.samples")), cfg.seed(),
      parallel_options(cfg, threads));
  ExperimentResult res{"covariance-structure", {}};
  const std::size_t n = static_cast<std::size_t>(cfg.get_long("ensemble.samples"));
  for (const auto& e : rep.entries) {
    std::ostringstream name;
    name << (e.conjugated ? "cov_conj[" : "cov[") << e.i << ' ' << e.j << ' ' << e.k << ' ' << e.l
         << ']';
    const std::string meta = join_meta({{"pattern", e.on_pattern ? "on" : "off"},
                                        {"predicted_re", format_number(e.predicted.real())},
                                        {"predicted_im", format_number(e.predicted.imag())}});
    res.rows.push_back({name.str() + ".re", e.estimate.real(), e.error, n, meta});
    res.rows.push_back({name.str() + ".im", e.estimate.imag(), e.error, n, meta});
  }
  res.rows.push_back({"max_off_pattern", rep.max_off_pattern, 0.0, n,
                      join_meta({{"s", format_number(rep.s)}, {"slices", std::to_string(rep.slices)}})});
  return res;
}

ExperimentResult run_lyapunov_kind(const ExperimentConfig& cfg) {
  const long length = cfg.get_long("lyapunov.length");
  const LyapunovResult rep = lyapunov_spectrum(
      cfg.wire(), length, cfg.get_int("lyapunov.reorth_every"), cfg.seed());
  ExperimentResult res{"lyapunov", {}};
  for (Eigen::Index k = 0; k < rep.exponents.size(); ++k) {
    res.rows.push_back({"lyapunov[" + std::to_string(k) + "]", rep.exponents(k), 0.0,
                        static_cast<std::size_t>(length), "unit=per_slice"});
  }
  res.rows.push_back({"pairing_residual", rep.pairing_residual, 0.0, static_cast<std::size_t>(length), ""});
  return res;
}

ExperimentResult run_localization_kind(const ExperimentConfig& cfg, int threads) {
  const WireConfig wire = cfg.wire();
  std::vector<double> s_values;
  for (double r : cfg.get_doubles("localization.s_over_n")) s_values.push_back(r * wire.channels);
  const std::size_t n = static_cast<std::size_t>(cfg.get_long("ensemble.samples"));
  const LocalizationReport rep =
      localization_decay_report(wire, s_values, n, cfg.seed(), parallel_options(cfg, threads));
  ExperimentResult res{"localization", {}};
  for (std::size_t k = 0; k < rep.s_values.size(); ++k) {
    res.rows.push_back({at_time("mean_g", rep.s_values[k]), rep.mean_g[k].value,
                        rep.mean_g[k].error, n, join_meta({{"s", format_number(rep.s_values[k])}})});
  }
  for (std::size_t k = 0; k < rep.s_values.size(); ++k) {
    res.rows.push_back({at_time("mean_ln_g", rep.s_values[k]), rep.mean_log_g[k].value,
                        rep.mean_log_g[k].error, n, join_meta({{"s", format_number(rep.s_values[k])}})});
  }
  res.rows.push_back({"slope", rep.slope, rep.slope_error, n, "fit=ln_mean_g_vs_s"});
  res.rows.push_back({"log_slope", rep.log_slope, rep.log_slope_error, n, "fit=mean_ln_g_vs_s"});
  res.rows.push_back({"decaying", rep.decaying ? 1.0 : 0.0, 0.0, n, ""});
  return res;
}

ExperimentResult run_collapse_kind(const ExperimentConfig& cfg, int threads) {
  const CollapseReport rep = collapse_report(
      cfg.wire(), cfg.get_double("collapse.s"), cfg.get_double("collapse.ds"),
      static_cast<std::size_t>(cfg.get_long("ensemble.samples")), cfg.seed(),
      parallel_options(cfg, threads));
  ExperimentResult res{"collapse", {}};
  const std::size_t n = static_cast<std::size_t>(cfg.get_long("ensemble.samples"));
  const std::string ref = join_meta({{"reference", format_number(rep.flat_sigma)}});
  for (Eigen::Index mu = 0; mu < rep.sigma.sigma.rows(); ++mu) {
    for (Eigen::Index nu = 0; nu < rep.sigma.sigma.cols(); ++nu) {
      res.rows.push_back({entry_name("sigma", static_cast<int>(mu), static_cast<int>(nu)),
                          rep.sigma.sigma(mu, nu), 0.0, 0, ref});
    }
  }
  res.rows.push_back({"max_sigma_deviation", rep.max_sigma_deviation, 0.0, 0, ref});
  res.rows.push_back({"time_scale", rep.time_scale, 0.0, 0, ""});
  res.rows.push_back({"g_aniso", rep.aniso_g.value, rep.aniso_g.error, n,
                      join_meta({{"s", format_number(rep.s)}})});
  res.rows.push_back({"g_dmpk", rep.dmpk_g.value, rep.dmpk_g.error, n,
                      join_meta({{"s", format_number(rep.s / rep.time_scale)}})});
  res.rows.push_back({"g_gap", rep.aniso_g.value - rep.dmpk_g.value,
                      std::hypot(rep.aniso_g.error, rep.dmpk_g.error), n, ""});
  return res;
}

ExperimentResult run_sweep_kind(const ExperimentConfig& cfg, const std::string& kind, int threads) {
  const int n = cfg.get_int("sweep.channels");
  const int beta = cfg.get_int("wire.beta");
  double ds = cfg.get_double("sweep.ds");
  if (ds == 0.0) ds = 1e-3 * n;
  const std::size_t paths = static_cast<std::size_t>(cfg.get_long("ensemble.samples"));
  const auto points = dmpk_conductance_sweep(n, beta, noise_of(cfg),
                                             cfg.get_doubles(kind == "ucf" ? "ucf.z" : "ohm.z"), ds,
                                             paths, cfg.seed(), parallel_options(cfg, threads));
  ExperimentResult res{kind, {}};
  const double var_ref = 2.0 / (15.0 * beta);
  for (const auto& p : points) {
    char z[32];
    std::snprintf(z, sizeof(z), "%.6g", p.z);
    const double mean_ref = 1.0 / p.z + (1.0 - 2.0 / beta) / 3.0;
    res.rows.push_back({"var_g@z=" + std::string(z), p.variance.value, p.variance.error, paths,
                        join_meta({{"s", format_number(p.s)}, {"reference", format_number(var_ref)}})});
    res.rows.push_back({"mean_g@z=" + std::string(z), p.mean.value, p.mean.error, paths,
                        join_meta({{"s", format_number(p.s)}, {"reference", format_number(mean_ref)}})});
  }
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int threads) {
  config.validate();
  const std::string kind = config.kind();
  if (kind == "micro") return run_micro_kind(config, threads);
  if (kind == "sde-mea" || kind == "sde-aniso" || kind == "dmpk") {
    return run_sde_kind(config, kind, threads);
  }
  if (kind == "moment-convergence") return run_moment_kind(config, threads);
  if (kind == "covariance-structure") return run_covariance_kind(config, threads);
  if (kind == "lyapunov") return run_lyapunov_kind(config);
  if (kind == "localization") return run_localization_kind(config, threads);
  if (kind == "collapse") return run_collapse_kind(config, threads);
  return run_sweep_kind(config, kind, threads);
}

ValidationReport validate_wire(const WireConfig& wire) {
  wire.validate();
  ValidationReport rep;
  std::ostringstream out;
  out << std::setprecision(10);
  const int n = wire.channels;
  const CMatrix h = build_transverse_hamiltonian(n, wire.flux, wire.transverse_hopping);
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(h, Eigen::EigenvaluesOnly);
  const RVector e_perp = solver.eigenvalues();

  out << "wire: N=" << n << " E=" << wire.energy << " h=" << wire.transverse_hopping
      << " flux=" << wire.flux << " lambda=" << wire.disorder << "\n\n";
  out << "channels\n";
  out << std::left << std::setw(5) << "mu" << std::setw(18) << "E_perp" << std::setw(18) << "E_par"
      << std::setw(18) << "theta" << "rho\n";
  bool elliptic = true;
  for (int mu = 0; mu < n; ++mu) {
    const double e_par = wire.energy - e_perp(mu);
    out << std::setw(5) << mu << std::setw(18) << e_perp(mu) << std::setw(18) << e_par;
    if (std::abs(e_par) < 2.0) {
      const double theta = std::acos(e_par / 2.0);
      out << std::setw(18) << theta << 2.0 * std::sin(theta) << "\n";
    } else {
      elliptic = false;
      out << std::setw(18) << "-" << "-\n";
    }
  }

  out << "\nassumptions\n";
  out << "  elliptic channels (|E_par| < 2): " << (elliptic ? "pass" : "FAIL") << "\n";
  const bool flux_ok = wire.flux_in_range();
  out << "  flux in (0, 2 pi / N): " << (flux_ok ? "pass" : "FAIL") << "\n";
  bool spacing_ok = false;
  std::optional<ChannelBasis> basis;
  if (elliptic) {
    basis = diagonalize_channels(h, wire.energy);
    const SpacingReport sp = check_no_degenerate_spacings(*basis);
    out << "  nondegenerate longitudinal levels: " << (sp.nondegenerate_levels ? "pass" : "FAIL")
        << "\n";
    out << "  no degenerate level spacings: " << (sp.violations.empty() ? "pass" : "FAIL");
    if (!sp.violations.empty()) out << " (" << sp.violations.size() << " quadruples)";
    out << "\n";
    for (const auto& v : sp.violations) {
      out << "    (";
      for (int i = 0; i < 4; ++i) {
        out << (v.signs[i] > 0 ? "+" : "-") << v.channels[i] << (i < 3 ? ", " : "");
      }
      out << ")  residual " << v.residual << "\n";
    }
    spacing_ok = sp.passed();
  } else {
    out << "  level spacings: not checked\n";
  }

  out << "\nsigma matrix\n";
  if (basis) {
    const SigmaMatrix sigma = sigma_from_basis(*basis, RMatrix::Identity(n, n));
    for (int mu = 0; mu < n; ++mu) {
      out << " ";
      for (int nu = 0; nu < n; ++nu) out << " " << std::setw(16) << sigma.sigma(mu, nu);
      out << "\n";
    }
  } else {
    out << "  unavailable\n";
  }
  rep.passed = elliptic && flux_ok && spacing_ok;
  out << "\nverdict: " << (rep.passed ? "all checks pass" : "assumption violations") << "\n";
  rep.text = out.str();
  return rep;
}

}  // namespace wiresim
