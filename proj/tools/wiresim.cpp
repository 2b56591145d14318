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

// wiresim run --config FILE [--set key=value]... [--out DIR] [--format csv|json] [--threads N]
// wiresim validate --config FILE [--set key=value]...

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wiresim/errors.hpp"
#include "wiresim/experiment.hpp"

namespace fs = std::filesystem;
using namespace wiresim;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfig = 2, kModel = 3, kNumerical = 4 };

ExperimentConfig resolve(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig() : ExperimentConfig::load(path);
  for (const auto& s : sets) cfg.set_assignment(s);
  return cfg;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

int do_run(const std::string& config_path, const std::vector<std::string>& sets,
           const std::string& out_dir, const std::string& format, int threads) {
  ExperimentConfig cfg = resolve(config_path, sets);
  if (!out_dir.empty()) cfg.set("output.dir", out_dir);
  if (!format.empty()) cfg.set("output.format", format);
  cfg.validate();

  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentResult result = run_experiment(cfg, threads);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = cfg.get("output.dir");
  fs::create_directories(dir);
  const std::string fmt = cfg.get("output.format");
  const std::string results_name = "results." + fmt;
  write_file(dir / results_name, fmt == "json" ? format_json(result) : format_csv(result));

  nlohmann::ordered_json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["tool"] = "wiresim";
  manifest["version"] = kToolVersion;
  manifest["kind"] = result.kind;
  manifest["seed"] = std::to_string(cfg.seed());
  manifest["results"] = results_name;
  manifest["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.values()) manifest["config"][k] = v;
  manifest["threads"] = threads;
  manifest["started_at"] = started;
  manifest["wall_time_seconds"] = wall;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  for (const auto& r : result.rows) {
    std::cout << r.name << " = " << format_number(r.estimate) << " +- " << format_number(r.error);
    if (!r.metadata.empty()) std::cout << "  [" << r.metadata << "]";
    std::cout << "\n";
  }
  std::cout << "wrote " << (dir / results_name).string() << " and "
            << (dir / "manifest.json").string() << "\n";
  return kOk;
}

int do_validate(const std::string& config_path, const std::vector<std::string>& sets) {
  const ExperimentConfig cfg = resolve(config_path, sets);
  cfg.validate(false);
  const ValidationReport rep = validate_wire(cfg.wire());
  std::cout << rep.text;
  return rep.passed ? kOk : kModel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disordered quantum wire simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string format;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "run an experiment and write results plus a manifest");
  run->add_option("--config", config_path, "config file (key = value lines, or a manifest)");
  run->add_option("--set", sets, "override KEY=VALUE; repeatable")->take_all();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--format", format, "results format")->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--threads", threads, "worker threads, 0 = auto")->check(CLI::NonNegativeNumber);

  CLI::App* validate = app.add_subcommand("validate", "print channels, assumption checks and sigma");
  validate->add_option("--config", config_path, "config file")->required();
  validate->add_option("--set", sets, "override KEY=VALUE; repeatable")->take_all();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return do_run(config_path, sets, out_dir, format, threads);
    return do_validate(config_path, sets);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return kModel;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
