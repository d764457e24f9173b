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

// Scenario configuration: one JSON document per run.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qmetro/adaptive.hpp"
#include "qmetro/bayes.hpp"
#include "qmetro/scenarios.hpp"

namespace qmetro {

inline constexpr int kSchemaVersion = 1;

enum class TaskKind { Bounds, Bayes, Copt, Sopt, Mopt, Compopt, Mintime, Adapt };
TaskKind parse_task(const std::string& s);
const char* to_string(TaskKind t);

struct ModelConfig {
  std::string preset;       // bundled preset id, or empty
  std::string template_id;  // parametric template for grid tasks, or empty
  Constants constants;
  std::optional<DynamicsSpec> spec;
  std::optional<KrausChannel> kraus;
  Mat rho0;                  // empty when not given
  std::optional<Vec> psi0;   // initial guess for state searches
  Eigen::Index dim = 0;
  std::size_t nparams = 0;
  Parameterization parameterization() const;
};

enum class PriorKind { Uniform, Gaussian };

struct BayesConfig {
  std::vector<std::vector<double>> axes;
  PriorKind prior = PriorKind::Uniform;
  double mu = 0.0, eta = 1.0;
  std::vector<double> x_true;
  std::size_t rounds = 500;
  Estimator est = Estimator::MAP;
  std::vector<int> outcomes;  // recorded outcomes; simulated from x_true when empty
};

struct AdaptConfig {
  std::size_t pre_rounds = 500;
  std::optional<std::vector<double>> x_opt;
  bool free_measurement = false;
  std::size_t rounds = 1000;  // simulated rounds for the adapt task
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  TaskKind task = TaskKind::Bounds;
  ModelConfig model;
  ObjectiveSpec obj;
  AlgoParams algo;
  std::optional<Bound> bound;
  std::size_t Nc = 0;
  ControlTable ctrl0;  // optional initial guess for control searches
  MeasurementType mtype = MeasurementType::Projection;
  Povm minput;
  std::size_t m = 0;
  CompKind comp = CompKind::SM;
  double f_target = 0.0;
  SearchMode search = SearchMode::Binary;
  BayesConfig bayes;
  AdaptConfig adapt;
  std::string output_dir = "output";
  bool save_all = false;
  std::string canonical;  // normalized JSON text of the source document, hashed into manifests
};

// Errors are Config errors whose message starts with the offending key path.
ScenarioConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ScenarioConfig load_config(const std::string& path);

// Complex matrices as rows of [re, im] pairs (plain numbers are real entries).
Mat matrix_from_json(const std::string& text);
std::string matrix_to_json(const Mat& m);

// Derived objects used by the tasks and the service.
PriorGrid build_grid(const ScenarioConfig& cfg);
Povm measurement_for(const ScenarioConfig& cfg);
DerivedState final_state(const ScenarioConfig& cfg);
AdaptiveSession adapt_session(const ScenarioConfig& cfg, XOpt* info = nullptr);
OutcomeModel adapt_truth(const ScenarioConfig& cfg, const Povm& M);

}  // namespace qmetro
