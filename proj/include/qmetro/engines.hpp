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

// Objectives, exact gradients through the Lindblad recursion, and the
// population / simplex / iterative optimizers shared by all scenarios.

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qmetro/asymptotic.hpp"
#include "qmetro/dynamics.hpp"

namespace qmetro {

enum class ObjectiveKind { QFIM, CFIM, HCRB };
ObjectiveKind parse_objective_kind(const std::string& s);
const char* to_string(ObjectiveKind k);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::QFIM;
  LdType ld = LdType::SLD;
  RMat W;   // empty means identity
  Povm M;   // CFIM only; empty means SIC
};

RMat weight_or_identity(const RMat& W, Eigen::Index n);

// Scalar to maximize: F (or I) for one parameter, 1/Tr(W F^-1) otherwise, 1/HCRB for HCRB.
double objective_value(const DerivedState& ds, const ObjectiveSpec& obj, double eps = kEps);

// Sensitivities of the objective: df = Re Tr(d_rho^† δρ) + Σ_a Re Tr(d_drho[a]^† δ∂_aρ).
struct ObjectiveGradient {
  double value = 0.0;
  Mat d_rho;
  std::vector<Mat> d_drho;
};
ObjectiveGradient objective_gradient(const DerivedState& ds, const ObjectiveSpec& obj, double eps = kEps);

// Weights C with df = Σ_ab C_ab dF_ab for the scalarized objective at F.
RMat scalarization_weights(const RMat& F, const RMat& W, double* value);

// Pullback of G = Σ_ab C_ab F_ab through the SLD equation: h_a solves ρh + hρ = ∂G/∂L_a.
struct PullbackResult {
  Mat dF_drho;
  std::vector<Mat> dF_ddrho;
  std::vector<Mat> h;
};
PullbackResult qfi_pullback(const DerivedState& ds, const RMat& C, double eps = kEps);
// SLD QFIM objective sensitivities assembled from qfi_pullback instead of the closed forms.
ObjectiveGradient objective_gradient_pullback(const DerivedState& ds, const ObjectiveSpec& obj, double eps = kEps);

enum class GradientRoute { Direct, Pullback };

struct DynamicsGradient {
  double value = 0.0;
  std::vector<std::vector<double>> ctrl;  // [k][c], matching spec.ctrl after normalization
  Mat rho0;                               // df = Re Tr(rho0^† δρ0)
  DerivedState final_state;
};
// Exact gradient of the discretized propagation (adjoint sweep with Fréchet derivatives of each step).
DynamicsGradient dynamics_gradient(const DynamicsSpec& spec, const Mat& rho0, const ObjectiveSpec& obj,
                                   GradientRoute route = GradientRoute::Direct, bool want_ctrl = true,
                                   double eps = kEps);
std::vector<std::vector<double>> grape_gradient(const DynamicsSpec& spec, const Mat& rho0, const ObjectiveSpec& obj,
                                                GradientRoute route = GradientRoute::Direct);

// ---- optimizers ----

enum class Algorithm { AutoGRAPE, GRAPE, AD, PSO, DE, NM, RI };
Algorithm parse_algorithm(const std::string& s);
const char* to_string(Algorithm a);

enum class Task { Control, State, Measurement, Comprehensive };

struct AlgoParams {
  Algorithm algo = Algorithm::AutoGRAPE;
  int p_num = 10;
  int max_episode = 300;
  int reset_period = 0;  // PSO: replace all particles with the global best every reset_period episodes
  double c0 = 1.0, c1 = 2.0, c2 = 2.0;
  double c = 1.0, cr = 0.5;
  double ar = 1.0, ae = 2.0, ac = 0.5, as0 = 0.5;
  bool adam = true;
  double epsilon = 0.01, beta1 = 0.90, beta2 = 0.99;
  std::uint64_t seed = 1234;
  int threads = 1;
};
AlgoParams default_params(Algorithm a, Task t);

struct AdamState {
  RVec m, v;
  int t = 0;
};
void adam_step(RVec& params, const RVec& grads, AdamState& st, double epsilon, double beta1, double beta2);
void ascent_step(RVec& params, const RVec& grads, AdamState& st, const AlgoParams& p);

// Candidates are real vectors; project clips to bounds or renormalizes, blocks group
// coordinates for the DE forced-crossover index.
struct Codec {
  std::size_t dim = 0;
  std::function<RVec(std::mt19937_64&)> random;
  std::function<void(RVec&)> project;
  std::vector<std::size_t> blocks;  // sizes summing to dim; empty means one block
};
using Evaluator = std::function<double(const RVec&)>;
using GradEvaluator = std::function<double(const RVec&, RVec& grad)>;

struct OptRun {
  std::vector<double> values;  // best-so-far per episode (gradient runs: value per episode)
  RVec best;
  double best_value = 0.0;
  std::size_t episodes = 0;
  std::vector<RVec> history;  // best candidate per episode when requested
  bool keep_history = false;
};

std::mt19937_64 candidate_rng(std::uint64_t seed, std::size_t index);
std::vector<RVec> initial_population(const Codec& codec, std::size_t n, const std::vector<RVec>& init,
                                     std::uint64_t seed);

OptRun pso_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init = {},
               bool keep_history = false);
OptRun de_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init = {},
              bool keep_history = false);
OptRun nm_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init = {},
              bool keep_history = false);
OptRun gradient_run(const Codec& codec, const GradEvaluator& f, const AlgoParams& p, const RVec& init,
                    bool keep_history = false);

// Pure states as real vectors [Re c, Im c].
RVec encode_state(const Vec& psi);
Vec decode_state(const RVec& v);
Codec state_codec(Eigen::Index dim);

// Reverse iteration over a single-parameter Kraus family; values are QFI per episode.
OptRun ri_run(const KrausChannel& ch, const Vec& psi0, const AlgoParams& p, bool keep_history = false);

}  // namespace qmetro
