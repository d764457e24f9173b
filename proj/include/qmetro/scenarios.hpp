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

// Optimization scenarios: controls, probe states, measurements, their joint
// optimization, and minimum-time search.

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmetro/engines.hpp"

namespace qmetro {

using ControlTable = std::vector<std::vector<double>>;  // [control][amplitude]
using Bound = std::pair<double, double>;

// Where the probe state enters: Lindblad dynamics or a Kraus channel.
struct Parameterization {
  std::optional<DynamicsSpec> dynamics;
  std::optional<KrausChannel> kraus;
  Eigen::Index dim() const;
  std::size_t nparams() const;
};

struct ControlProblem {
  DynamicsSpec spec;  // spec.Hc lists the control Hamiltonians; spec.ctrl is ignored
  Mat rho0;
  ObjectiveSpec obj;
  std::optional<Bound> bound;
  std::size_t Nc = 0;  // amplitudes per control; 0 means one per step
};

struct ControlResult {
  OptRun run;
  ControlTable ctrl;
  DynamicsSpec spec;  // normalized, with the optimal controls installed
};

ControlResult control_opt(const ControlProblem& prob, const AlgoParams& p, const std::vector<ControlTable>& ctrl0 = {},
                          bool keep_history = false);

// Flattened control candidates, index k * Nc + j.
Codec control_codec(std::size_t K, std::size_t Nc, const std::optional<Bound>& bound);
RVec encode_controls(const ControlTable& c);
ControlTable decode_controls(const RVec& x, std::size_t K, std::size_t Nc);

struct StateProblem {
  Parameterization model;
  ObjectiveSpec obj;
};

struct StateResult {
  OptRun run;
  Vec psi;
};

// Objective at rho0 = |psi><psi| and its gradient in the codec coordinates [Re c, Im c].
double state_gradient(const StateProblem& prob, const Vec& psi, RVec& grad);
StateResult state_opt(const StateProblem& prob, const AlgoParams& p, const std::vector<Vec>& psi0 = {},
                      bool keep_history = false);

enum class MeasurementType { Projection, LinearCombination, Rotation };
MeasurementType parse_measurement_type(const std::string& s);
const char* to_string(MeasurementType t);

struct MeasurementProblem {
  MeasurementType type = MeasurementType::Projection;
  DerivedState state;  // the parameterized state being measured
  RMat W;
  Povm input;          // LC and rotation
  std::size_t m = 0;   // LC output size
};

struct MeasurementResult {
  OptRun run;
  Povm M;
};

Codec measurement_codec(const MeasurementProblem& prob);
Povm decode_measurement(const MeasurementProblem& prob, const RVec& x);
// Objective and its gradient for the LC and rotation codecs.
double measurement_gradient(const MeasurementProblem& prob, const RVec& x, RVec& grad);
MeasurementResult measurement_opt(const MeasurementProblem& prob, const AlgoParams& p,
                                  const std::vector<RVec>& init = {}, bool keep_history = false);

// Orthonormal basis from candidate columns; projection measurement outcomes are its projectors.
Mat gram_schmidt(const Mat& c);

enum class CompKind { SM, SC, CM, SCM };
CompKind parse_comp_kind(const std::string& s);
const char* to_string(CompKind k);

struct ComprehensiveProblem {
  CompKind kind = CompKind::SM;
  Parameterization model;
  Mat rho0;           // CM only
  ObjectiveSpec obj;  // SC target; SM, CM and SCM use the classical objective with obj.W
  std::optional<Bound> bound;
  std::size_t Nc = 0;
  std::vector<Vec> psi0;
};

struct ComprehensiveResult {
  OptRun run;
  Vec psi;
  ControlTable ctrl;
  Povm M;
  DynamicsSpec spec;
};

ComprehensiveResult comprehensive_opt(const ComprehensiveProblem& prob, const AlgoParams& p, bool keep_history = false);

enum class SearchMode { Binary, Forward };
SearchMode parse_search_mode(const std::string& s);

struct MinTimeResult {
  std::size_t steps = 0;
  double t = 0.0;
  double value = 0.0;
  std::vector<double> tspan;
  ControlTable ctrl;
  std::vector<std::pair<std::size_t, double>> probes;  // (steps, optimized value)
};

// Least tspan prefix whose optimized objective reaches f_target.
MinTimeResult mintime(const ControlProblem& prob, double f_target, SearchMode mode, const AlgoParams& p);

}  // namespace qmetro
