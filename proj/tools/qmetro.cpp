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

// qmetro command-line entry point.

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <map>

#include "qmetro/io.hpp"
#include "qmetro/service.hpp"
// After Eigen: <resolv.h> defines _res, which Eigen uses as an identifier.
#include "CLI11.hpp"
#include "httplib.h"

using namespace qmetro;

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  bool save_all = false;
  bool quiet = false;
};

void add_run_options(CLI::App* sub, RunOptions& o) {
  sub->add_option("-c,--config", o.config, "scenario config (JSON)")->required();
  sub->add_option("--seed", o.seed, "override algorithm.seed");
  sub->add_option("-o,--output-dir", o.output_dir, "override output.directory");
  sub->add_flag("--save-all", o.save_all, "keep per-episode artifacts");
  sub->add_flag("-q,--quiet", o.quiet, "no summary table");
}

ScenarioConfig load(const RunOptions& o, TaskKind expected) {
  ScenarioConfig cfg = load_config(o.config);
  if (cfg.task != expected)
    fail(ErrorKind::Config, std::string("task: config is for '") + to_string(cfg.task) + "', not '" +
                                to_string(expected) + "'");
  if (o.seed) cfg.algo.seed = *o.seed;
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  if (o.save_all) cfg.save_all = true;
  if (const char* t = std::getenv("QMETRO_THREADS")) {
    const int n = std::atoi(t);
    if (n < 1) fail(ErrorKind::Config, "QMETRO_THREADS must be a positive integer");
    cfg.algo.threads = n;
  }
  return cfg;
}

void print_summary(const TaskOutput& out, const std::string& dir) {
  std::size_t w = 8;
  for (const auto& kv : out.summary) w = std::max(w, kv.first.size());
  for (const auto& kv : out.summary) std::cout << std::left << std::setw(static_cast<int>(w) + 2) << kv.first << kv.second << '\n';
  std::cout << std::left << std::setw(static_cast<int>(w) + 2) << "output" << dir << '\n';
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::NotFound: return 4;
    default: return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum parameter estimation toolkit"};
  app.require_subcommand(1);

  const std::map<std::string, TaskKind> batch{{"bounds", TaskKind::Bounds}, {"bayes", TaskKind::Bayes},
                                              {"copt", TaskKind::Copt},     {"sopt", TaskKind::Sopt},
                                              {"mopt", TaskKind::Mopt},     {"compopt", TaskKind::Compopt},
                                              {"mintime", TaskKind::Mintime}};
  const std::map<std::string, std::string> help{
      {"bounds", "Fisher information and Cramer-Rao type bounds"},
      {"bayes", "Bayesian estimation on a parameter grid"},
      {"copt", "control optimization"},
      {"sopt", "probe state optimization"},
      {"mopt", "measurement optimization"},
      {"compopt", "joint state/control/measurement optimization"},
      {"mintime", "minimum time to reach an objective value"}};
  std::map<std::string, RunOptions> opts;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, task] : batch) {
    subs[name] = app.add_subcommand(name, help.at(name));
    add_run_options(subs[name], opts[name]);
  }

  RunOptions adapt_opt, replay_opt;
  std::string outcomes;
  auto* adapt = app.add_subcommand("adapt", "simulate an adaptive measurement run");
  add_run_options(adapt, adapt_opt);
  adapt->get_option("--config")->required(false);
  auto* replay = adapt->add_subcommand("replay", "replay recorded outcomes through a session");
  add_run_options(replay, replay_opt);
  replay->add_option("--outcomes", outcomes, "recorded y.csv")->required();

  std::string host = "127.0.0.1", data_dir;
  int port = 8080;
  std::size_t max_points = 512;
  auto* srv_cmd = app.add_subcommand("serve", "run the adaptive measurement service");
  srv_cmd->add_option("--host", host, "bind address");
  srv_cmd->add_option("--port", port, "bind port");
  srv_cmd->add_option("--data-dir", data_dir, "session log directory; enables resume");
  srv_cmd->add_option("--max-points", max_points, "posterior points per axis in payloads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (const auto& [name, task] : batch) {
      if (!subs[name]->parsed()) continue;
      const RunOptions& o = opts[name];
      const ScenarioConfig cfg = load(o, task);
      const TaskOutput out = run_task(cfg);
      write_bundle(cfg.output_dir, cfg, out);
      if (!o.quiet) print_summary(out, cfg.output_dir);
      return 0;
    }
    if (replay->parsed()) {
      const ScenarioConfig cfg = load(replay_opt, TaskKind::Adapt);
      const TaskOutput out = adapt_replay(cfg, read_y(read_file(outcomes)));
      write_bundle(cfg.output_dir, cfg, out);
      if (!replay_opt.quiet) print_summary(out, cfg.output_dir);
      return 0;
    }
    if (adapt->parsed()) {
      if (adapt_opt.config.empty()) fail(ErrorKind::Config, "--config is required");
      const ScenarioConfig cfg = load(adapt_opt, TaskKind::Adapt);
      const TaskOutput out = run_task(cfg);
      write_bundle(cfg.output_dir, cfg, out);
      if (!adapt_opt.quiet) print_summary(out, cfg.output_dir);
      return 0;
    }
    if (srv_cmd->parsed()) {
      ServiceOptions so;
      so.data_dir = data_dir;
      so.max_points = max_points;
      AdaptService svc(so);
      const std::size_t n = svc.resume();
      httplib::Server srv;
      std::cerr << "serving on " << host << ":" << port << " (" << n << " sessions resumed)\n";
      serve(svc, srv, host, port);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
