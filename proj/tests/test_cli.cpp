// Copyright 2026 The qmetro Authors
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

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "qmetro/io.hpp"

using namespace qmetro;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string preset_path(const std::string& name) { return std::string(QMETRO_SOURCE_DIR) + "/presets/" + name; }

json preset_json(const std::string& name) { return json::parse(read_file(preset_path(name))); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qmetro_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
    return e.what();
  }
  return "";
}

std::string with(json j, const std::string& ptr, const json& v) {
  j[json::json_pointer(ptr)] = v;
  return j.dump();
}

std::string without(json j, const std::string& ptr) {
  const json::json_pointer p(ptr);
  j[p.parent_pointer()].erase(p.back());
  return j.dump();
}

int run_cli(const std::string& args, const fs::path& log, const std::string& env = "") {
  const std::string cmd = env + std::string(QMETRO_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string artifact(const TaskOutput& out, const std::string& name) {
  for (const auto& f : out.files)
    if (f.name == name) return f.content;
  FAIL("missing artifact " << name);
  return "";
}

}  // namespace

TEST_CASE("bundled presets load") {
  for (const auto& e : fs::directory_iterator(std::string(QMETRO_SOURCE_DIR) + "/presets")) {
    CAPTURE(e.path().string());
    CHECK_NOTHROW(load_config(e.path().string()));
  }
  const ScenarioConfig c = load_config(preset_path("me_spon.json"));
  CHECK(c.task == TaskKind::Bounds);
  CHECK(c.model.dim == 2);
  CHECK(c.model.nparams == 1);
  REQUIRE(c.model.spec);
  CHECK(c.model.spec->tspan.size() == 501);
  CHECK(c.model.spec->decay.size() == 2);
  CHECK(c.model.spec->decay[1].rate == doctest::Approx(0.1));
}

TEST_CASE("validation names the offending key") {
  const json base = preset_json("two_qubit_xx.json");
  CHECK(config_error(with(base, "/objective/W", {{1.0, 0.0}, {0.0, -1.0}})).find("objective.W") == 0);
  CHECK(config_error(with(base, "/objective/W", {{1.0, 0.0}, {0.0, -1.0}})).find("positive semidefinite") !=
        std::string::npos);
  CHECK(config_error(with(base, "/objective/W", {{1.0, 2.0}, {0.0, 1.0}})).find("objective.W") == 0);
  CHECK(config_error(with(base, "/objective/W", {{1.0}})).find("objective.W") == 0);
  CHECK(config_error(with(base, "/model/bogus", 1)) == "model.bogus: unknown key");
  CHECK(config_error(with(base, "/algorithm", {{"name", "DE"}, {"p_nm", 3}})) == "algorithm.p_nm: unknown key");
  CHECK(config_error(with(base, "/extra", 1)) == "extra: unknown key");
  CHECK(config_error(with(base, "/algorithm", {{"name", "SA"}})).find("algorithm.name") == 0);
  CHECK(config_error(without(base, "/schema_version")).find("schema_version") == 0);
  CHECK(config_error(with(base, "/schema_version", 2)).find("unsupported version 2") != std::string::npos);
  CHECK(config_error(with(base, "/task", "fit")).find("task") == 0);
}

TEST_CASE("tspan must increase") {
  const json base = preset_json("qubit.json");
  json j = base;
  j["dynamics"] = {{"tspan", {0.0, 1.0, 0.5, 2.0}}};
  const std::string msg = config_error(j.dump());
  CHECK(msg.find("dynamics.tspan[2]") == 0);
  CHECK(msg.find("increasing") != std::string::npos);
  j["dynamics"] = {{"tspan", {0.0, 1.0}}, {"T", 1.0}};
  CHECK(config_error(j.dump()).find("dynamics.tspan") == 0);
  j["dynamics"] = {{"T", -1.0}, {"steps", 10}};
  CHECK(config_error(j.dump()).find("dynamics.T") == 0);
}

TEST_CASE("parse errors carry line and column") {
  const std::string msg = config_error("{\n  \"schema_version\": 1,\n  \"task\": bounds\n}");
  CHECK(msg.find("<config>:3:") == 0);
  CHECK(msg.find("parse error") != std::string::npos);
  CHECK_THROWS_WITH_AS(load_config("/nonexistent/qmetro.json"), doctest::Contains("cannot read"), Error);
}

TEST_CASE("inline model with complex entries") {
  json j = {{"schema_version", 1},
            {"task", "bounds"},
            {"model",
             {{"H0", {{0.5, 0.0}, {0.0, -0.5}}},
              {"dH", {{{0.5, 0.0}, {0.0, -0.5}}}},
              {"psi0", {{0.7071067811865476, 0.0}, {0.0, 0.7071067811865476}}}}},
            {"dynamics", {{"T", 3.0}, {"steps", 30}}}};
  const ScenarioConfig c = parse_config(j.dump());
  CHECK(c.model.rho0(0, 1).imag() == doctest::Approx(-0.5));
  const TaskOutput out = run_task(c);
  CHECK(read_values(artifact(out, "f.csv"))[0] == doctest::Approx(9.0).epsilon(1e-9));

  j["model"]["rho0"] = {{1.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
  j["model"].erase("psi0");
  CHECK(config_error(j.dump()).find("model.rho0") == 0);
  j["model"]["rho0"] = {{{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 0.0}, {"x", 0.0}}};
  CHECK(config_error(j.dump()).find("model.rho0[1][1][0]") == 0);
  j["model"]["rho0"] = {{1.0, 0.0}, {0.0, 0.0}};
  j["model"]["dH"] = {{{1.0, 0.0}, {0.0, 0.0}}, {{0.0, 1.0}, {0.0, 0.0}}};
  CHECK(config_error(j.dump()).find("model.dH[1]") == 0);
  j["model"]["dH"] = {{{1.0, 0.0}, {0.0, -1.0}}};
  j["model"]["Hc"] = {{{0.0, 1.0}, {1.0, 0.0}}};
  j["dynamics"]["ctrl"] = {{0.1}, {0.2}};
  CHECK(config_error(j.dump()).find("dynamics.ctrl") == 0);

  const Mat m = matrix_from_json("[[[1, 2], 3], [[0, -1], [4.5, 0]]]");
  CHECK(m(0, 0) == cplx(1, 2));
  CHECK(m(1, 0) == cplx(0, -1));
  CHECK(matrix_from_json(matrix_to_json(m)) == m);
}

TEST_CASE("task sections must match the task") {
  const json base = preset_json("qubit.json");
  CHECK(config_error(with(base, "/mintime", {{"target", 1.0}})).find("mintime") == 0);
  json mt = json::parse(with(base, "/task", "mintime"));
  mt["mintime"] = {{"target", 1.0}};
  CHECK(config_error(mt.dump()).find("model.Hc") == 0);
  const json cp = preset_json("me_spon_copt.json");
  CHECK(config_error(with(cp, "/dynamics/bound", {1.0, -1.0})).find("dynamics.bound") == 0);
  const json bd = preset_json("bayes_demo.json");
  CHECK(config_error(with(bd, "/bayes/axes", json::array())).find("bayes.axes") == 0);
  CHECK(config_error(with(bd, "/bayes/x_true", {0.1, 0.2})).find("bayes.x_true") == 0);
  CHECK(config_error(with(bd, "/bayes/axes/0/n", -3)).find("bayes.axes[0].n") == 0);
}

TEST_CASE("bounds on the qubit preset") {
  const ScenarioConfig c = load_config(preset_path("qubit.json"));
  const TaskOutput out = run_task(c);
  const auto f = read_values(artifact(out, "f.csv"));
  REQUIRE(f.size() == 1);
  CHECK(f[0] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(artifact(out, "bounds.csv").find("QFI,") != std::string::npos);
}

TEST_CASE("copt keeps only final controls unless save_all") {
  ScenarioConfig c = load_config(preset_path("me_spon_copt.json"));
  c.algo.max_episode = 5;
  const TaskOutput out = run_task(c);
  const auto ctrl = read_controls(artifact(out, "controls.csv"));
  REQUIRE(ctrl.size() == 1);
  CHECK(ctrl[0].size() == 3);
  CHECK(ctrl[0][0].size() == 50);
  CHECK(read_values(artifact(out, "f.csv")).size() == 5);

  c.save_all = true;
  const TaskOutput all = run_task(c);
  const auto blocks = read_controls(artifact(all, "controls.csv"));
  REQUIRE(blocks.size() == 5);
  // Row k of f.csv is the objective of control block k.
  const auto f = read_values(artifact(all, "f.csv"));
  for (std::size_t k : {std::size_t{0}, std::size_t{4}}) {
    DynamicsSpec spec = *c.model.spec;
    spec.ctrl = blocks[k];
    CHECK(objective_value(lindblad_final(spec, c.model.rho0), c.obj) == doctest::Approx(f[k]).epsilon(1e-9));
  }
}

TEST_CASE("reruns reproduce the manifest") {
  ScenarioConfig c = load_config(preset_path("me_spon_copt.json"));
  c.algo.max_episode = 5;
  c.algo.algo = Algorithm::PSO;
  const std::string a = manifest_json(c, run_task(c).files);
  const std::string b = manifest_json(c, run_task(c).files);
  CHECK(a == b);
  const json m = json::parse(a);
  CHECK(m["seed"] == 1234);
  CHECK(m["config_sha256"].get<std::string>().size() == 64);
  CHECK(m["artifacts"].contains("controls.csv"));
  c.algo.seed = 99;
  CHECK(manifest_json(c, run_task(c).files) != a);
}

TEST_CASE("sha256 test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("csv artifacts round trip") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(7);
    for (auto& x : v) x = g(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(read_values(csv_values(v, "values")) == v);

    std::vector<ControlTable> blocks(3, ControlTable(2, std::vector<double>(4)));
    for (auto& b : blocks)
      for (auto& r : b)
        for (auto& x : r) x = g(rng);
    CHECK(read_controls(csv_controls(blocks)) == blocks);

    std::vector<Vec> states;
    for (int i = 0; i < 3; ++i) states.push_back(Vec::Random(5));
    const auto sback = read_states(csv_states(states));
    REQUIRE(sback.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(sback[i] == states[i]);

    std::vector<Povm> ms{sic_povm(3), sic_povm(3)};
    const auto mback = read_measurements(csv_measurements(ms));
    REQUIRE(mback.size() == 2);
    for (std::size_t k = 0; k < ms[1].size(); ++k) CHECK(mback[1].ops[k] == ms[1].ops[k]);

    const std::vector<int> y{0, 1, 1, 0, 2};
    CHECK(read_y(csv_y(y)) == y);
  }
  CHECK_THROWS_AS(read_values("# x\n1.0\nabc\n"), Error);
  CHECK_THROWS_AS(read_controls("1,2\n"), Error);
}

TEST_CASE("bayes task artifacts") {
  ScenarioConfig c = load_config(preset_path("bayes_demo.json"));
  const TaskOutput out = run_task(c);
  const auto x = read_rows(artifact(out, "xout.csv"));
  CHECK(x.size() == 500);
  CHECK(std::abs(x.back()[0] - M_PI / 4.0) < 0.05);
  CHECK(read_y(artifact(out, "y.csv")).size() == 500);
  CHECK(read_rows(artifact(out, "pout.csv")).size() == 1);
  c.save_all = true;
  CHECK(read_rows(artifact(run_task(c), "pout.csv")).size() == 500);
  c.bayes.outcomes = {0, 1, 2};
  CHECK_THROWS_WITH_AS(run_task(c), doctest::Contains("bayes.outcomes[2]"), Error);
}

TEST_CASE("adapt replay reproduces the recorded offsets") {
  ScenarioConfig c = load_config(preset_path("adapt_demo.json"));
  c.adapt.pre_rounds = 50;
  c.adapt.rounds = 120;
  const TaskOutput sim = run_task(c);
  const TaskOutput rep = adapt_replay(c, read_y(artifact(sim, "y.csv")));
  for (const char* f : {"u.csv", "xout.csv", "y.csv", "pout.csv"}) CHECK(artifact(rep, f) == artifact(sim, f));
}

TEST_CASE("command line") {
  const fs::path dir = scratch("cmd");
  const fs::path log = dir / "log.txt";
  const std::string cli_out = (dir / "qubit").string();

  CHECK(run_cli("bounds --config " + preset_path("qubit.json") + " -o " + cli_out, log) == 0);
  const std::string printed = read_file(log.string());
  CHECK(printed.find("QFI") != std::string::npos);
  CHECK(printed.find("CFI") != std::string::npos);
  CHECK(read_values(read_file(cli_out + "/f.csv"))[0] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(fs::exists(cli_out + "/manifest.json"));
  const std::string first = read_file(cli_out + "/manifest.json");
  CHECK(run_cli("bounds --config " + preset_path("qubit.json") + " -o " + cli_out, log) == 0);
  CHECK(read_file(cli_out + "/manifest.json") == first);

  // Wrong subcommand for the config, unknown flags and bad configs are config errors.
  CHECK(run_cli("copt --config " + preset_path("qubit.json") + " -o " + cli_out, log) == 2);
  CHECK(run_cli("bounds --config " + preset_path("qubit.json") + " --frobnicate", log) == 2);
  {
    std::ofstream(dir / "bad.json") << with(preset_json("two_qubit_xx.json"), "/objective/W", {{1.0, 0.0}, {0.0, -1.0}});
    CHECK(run_cli("bounds --config " + (dir / "bad.json").string(), log) == 2);
    CHECK(read_file(log.string()).find("objective.W") != std::string::npos);
  }

  // Unreachable minimum-time target.
  {
    json mt = preset_json("me_spon_mintime.json");
    mt["mintime"]["target"] = 1e6;
    mt["algorithm"]["max_episode"] = 3;
    std::ofstream(dir / "mt.json") << mt.dump();
    CHECK(run_cli("mintime --config " + (dir / "mt.json").string() + " -o " + (dir / "mt").string(), log) == 4);
  }

  // Record an adaptive run, then replay its outcomes through the CLI.
  {
    json ad = preset_json("adapt_demo.json");
    ad["adapt"]["pre_rounds"] = 40;
    ad["adapt"]["rounds"] = 100;
    std::ofstream(dir / "ad.json") << ad.dump();
    CHECK(run_cli("adapt --config " + (dir / "ad.json").string() + " -o " + (dir / "rec").string(), log) == 0);
    CHECK(run_cli("adapt replay --config " + (dir / "ad.json").string() + " --outcomes " + (dir / "rec" / "y.csv").string() +
                      " -o " + (dir / "rep").string(),
                  log) == 0);
    CHECK(read_file((dir / "rep" / "u.csv").string()) == read_file((dir / "rec" / "u.csv").string()));
    CHECK(read_rows(read_file((dir / "rep" / "u.csv").string())).size() == 100);
  }

  // Seed override changes a stochastic run; the thread variable is validated.
  {
    json mo = preset_json("qubit_mopt.json");
    mo["algorithm"]["max_episode"] = 3;
    std::ofstream(dir / "mo.json") << mo.dump();
    const std::string base = "mopt --config " + (dir / "mo.json").string() + " -q -o ";
    CHECK(run_cli(base + (dir / "s1").string() + " --seed 1", log) == 0);
    CHECK(run_cli(base + (dir / "s2").string() + " --seed 2", log) == 0);
    CHECK(read_file((dir / "s1" / "measurements.csv").string()) !=
          read_file((dir / "s2" / "measurements.csv").string()));
    CHECK(json::parse(read_file((dir / "s2" / "manifest.json").string()))["seed"] == 2);
    CHECK(run_cli(base + (dir / "s3").string(), log, "QMETRO_THREADS=0 ") == 2);
  }
}
