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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wiresim/ensemble.hpp"
#include "wiresim/wire_model.hpp"

namespace wiresim {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct ConfigKey {
  std::string name;
  // Empty for the two required keys.
  std::string default_value;
  std::string help;
  bool required = false;
};

const std::vector<ConfigKey>& config_keys();
const std::vector<std::string>& experiment_kinds();

// Flat dotted key = value configuration. Every known key resolves to a value;
// unknown keys raise ConfigError.
class ExperimentConfig {
 public:
  ExperimentConfig();

  // "key = value" lines; '#' starts a comment.
  static ExperimentConfig parse_text(std::string_view text);
  // Reads either the text format or a manifest written by run.
  static ExperimentConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  // "key=value".
  void set_assignment(const std::string& assignment);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_long(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  std::vector<std::pair<int, int>> get_entries(const std::string& key) const;

  std::string kind() const;
  std::uint64_t seed() const;

  // Parses every value once; throws ConfigError on the first bad one.
  // With require_run_keys, kind and seed must be present.
  void validate(bool require_run_keys = true) const;

  WireConfig wire() const;

  // All keys, sorted, with resolved values.
  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

struct ResultRow {
  std::string name;
  double estimate = 0.0;
  double error = 0.0;
  std::size_t count = 0;
  // "key=value" pairs joined by ';'.
  std::string metadata;
};

struct ExperimentResult {
  std::string kind;
  std::vector<ResultRow> rows;
};

ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 0);

std::string format_number(double v);
std::string format_csv(const ExperimentResult& result);
std::string format_json(const ExperimentResult& result);

struct ValidationReport {
  std::string text;
  bool passed = false;
};

// Channel table, assumption verdicts and the sigma matrix; no simulation.
ValidationReport validate_wire(const WireConfig& wire);

}  // namespace wiresim
