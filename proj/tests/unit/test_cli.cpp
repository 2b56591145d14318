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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "wiresim/errors.hpp"
#include "wiresim/experiment.hpp"

using namespace wiresim;

namespace {

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

ExperimentConfig small_micro() {
  ExperimentConfig c = ExperimentConfig::parse_text(
      "# small run\n"
      "kind = micro\n"
      "seed = 17\n"
      "wire.channels = 2\n"
      "wire.length = 30\n"
      "ensemble.samples = 40\n"
      "ensemble.chunk = 8\n");
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = small_micro();
  CHECK(c.kind() == "micro");
  CHECK(c.seed() == 17);
  CHECK(c.get_int("wire.channels") == 2);
  CHECK(c.get_double("wire.energy") == 0.3);
  CHECK(c.get_double("wire.flux") == doctest::Approx(0.37 * kPi).epsilon(1e-15));
  CHECK_NOTHROW(c.validate());

  ExperimentConfig d;
  d.set("wire.flux", "pi");
  CHECK(d.get_double("wire.flux") == kPi);
  d.set("wire.flux", "-0.5pi");
  CHECK(d.get_double("wire.flux") == -0.5 * kPi);
  d.set_assignment("moment.lambdas=0.3, 0.2");
  CHECK(d.get_doubles("moment.lambdas") == std::vector<double>{0.3, 0.2});
  d.set("observe.entries", "0:1,2:3");
  const auto e = d.get_entries("observe.entries");
  REQUIRE(e.size() == 2);
  CHECK(e[1] == std::pair<int, int>{2, 3});
  d.set("observe.spectrum", "true");
  CHECK(d.get_bool("observe.spectrum"));
}

TEST_CASE("config errors") {
  ExperimentConfig c;
  CHECK_THROWS_AS(c.set("wire.energi", "0.3"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse_text("kind micro\n"), ConfigError);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set("kind", "micro");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set("seed", "3");
  CHECK_NOTHROW(c.validate());
  c.set("kind", "nonsense");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set("kind", "micro");
  c.set("wire.channels", "two");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set("wire.channels", "2");
  c.set("observe.spectrum", "maybe");
  CHECK_THROWS_AS(c.validate(false), ConfigError);
  ExperimentConfig bare;
  CHECK_NOTHROW(bare.validate(false));
}

TEST_CASE("every key has a default and a description") {
  const ExperimentConfig c;
  for (const ConfigKey& k : config_keys()) {
    CHECK_FALSE(k.help.empty());
    CHECK(c.has(k.name) != k.required);
    if (!k.required) CHECK(c.get(k.name) == k.default_value);
  }
  CHECK(experiment_kinds().size() >= 10);
}

TEST_CASE("text round trip") {
  const ExperimentConfig c = small_micro();
  const ExperimentConfig back = ExperimentConfig::parse_text(c.to_text());
  CHECK(back.values() == c.values());
}

TEST_CASE("load from a manifest") {
  const ExperimentConfig c = small_micro();
  nlohmann::json m;
  m["schema_version"] = kSchemaVersion;
  m["config"] = c.values();
  const auto path = std::filesystem::temp_directory_path() / "wiresim_test_manifest.json";
  {
    std::ofstream out(path);
    out << m.dump(2);
  }
  const ExperimentConfig back = ExperimentConfig::load(path.string());
  std::filesystem::remove(path);
  CHECK(back.values() == c.values());
}

TEST_CASE("output schema") {
  ExperimentResult r;
  r.kind = "micro";
  r.rows.push_back({"g", 1.5, 0.25, 10, ""});
  r.rows.push_back({"m2:A[0,1]", 0.5, 0.0, 10, "a=1;b=2"});
  const std::string csv = format_csv(r);
  CHECK(first_line(csv) == "schema_version,kind,name,estimate,stderr,count,metadata");
  CHECK(csv.find("1,micro,g,1.5,0.25,10,\n") != std::string::npos);
  CHECK(csv.find("\"m2:A[0,1]\"") != std::string::npos);

  const auto j = nlohmann::json::parse(format_json(r));
  CHECK(j["schema_version"] == kSchemaVersion);
  CHECK(j["kind"] == "micro");
  CHECK(j["rows"].size() == 2);
  CHECK(j["rows"][0]["estimate"] == 1.5);
  CHECK(j["rows"][1]["metadata"] == "a=1;b=2");

  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_number(std::nan("")) == "nan");
}

TEST_CASE("runs are deterministic") {
  const ExperimentConfig c = small_micro();
  const std::string a = format_csv(run_experiment(c, 1));
  const std::string b = format_csv(run_experiment(c, 2));
  CHECK(a == b);
  ExperimentConfig other = c;
  other.set("seed", "18");
  CHECK(format_csv(run_experiment(other, 1)) != a);
}

TEST_CASE("ballistic micro run reports N") {
  ExperimentConfig c = small_micro();
  c.set("wire.disorder", "0");
  const ExperimentResult r = run_experiment(c, 1);
  bool found = false;
  for (const ResultRow& row : r.rows) {
    if (row.name == "g") {
      found = true;
      CHECK(row.estimate == 2.0);
      CHECK(row.error == 0.0);
      CHECK(row.count == 40);
    }
  }
  CHECK(found);
}

TEST_CASE("wire validation") {
  WireConfig w;
  w.channels = 2;
  w.flux = 0.37 * kPi;
  const ValidationReport ok = validate_wire(w);
  CHECK(ok.passed);
  CHECK(ok.text.find("sigma") != std::string::npos);

  w.flux = kPi;
  CHECK_FALSE(validate_wire(w).passed);

  w.flux = 0.37 * kPi;
  w.energy = 0.0;
  const ValidationReport band_centre = validate_wire(w);
  CHECK_FALSE(band_centre.passed);

  w.energy = 5.0;
  CHECK_FALSE(validate_wire(w).passed);
}
