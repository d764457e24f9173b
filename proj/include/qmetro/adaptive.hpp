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

// Adaptive measurement: Bayesian pre-estimation followed by rounds in which a
// tunable offset u moves the working point to x_opt.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qmetro/bayes.hpp"
#include "qmetro/scenarios.hpp"

namespace qmetro {

enum class Phase { PreEstimation, Adaptive };
const char* to_string(Phase p);
Phase parse_phase(const std::string& s);

struct XOpt {
  std::vector<double> x;
  std::size_t index = 0;
  double value = 0.0;  // Tr(W I^-1) or Tr(W F^-1) at x
  Povm M;              // optimal measurement when the measurement is free
};

// Grid point minimizing Tr(W I^-1) for fixed M, or Tr(W F^-1) when free_measurement is set.
XOpt find_x_opt(const PriorGrid& g, const Povm& M, const RMat& W, bool free_measurement = false,
                const AlgoParams& mopt = default_params(Algorithm::DE, Task::Measurement));

struct RoundRecord {
  int y = 0;
  std::vector<double> u;  // offset the outcome was taken with
  std::vector<double> xhat;
  Phase phase = Phase::PreEstimation;
};

struct AdaptiveSession {
  std::vector<std::vector<double>> axes;
  std::vector<RVec> likelihood;  // p(y | x_i) on the unshifted grid, per outcome
  RVec posterior;
  std::vector<double> x_opt;
  std::vector<double> u;
  std::size_t round = 0;
  std::size_t pre_rounds = 500;
  Phase phase = Phase::PreEstimation;
  Estimator est = Estimator::MAP;
  std::vector<RoundRecord> history;

  std::size_t outcomes() const { return likelihood.size(); }
  std::size_t nparams() const { return axes.size(); }
  std::vector<double> xhat() const;
};

AdaptiveSession make_session(const PriorGrid& g, const Povm& M, const std::vector<double>& x_opt,
                             std::size_t pre_rounds = 500, Estimator est = Estimator::MAP);

// p(y | x_i + u) for every grid point, by multilinear interpolation clamped to the grid.
RVec shifted_likelihood(const AdaptiveSession& s, int y, const std::vector<double>& u);
double interpolate(const std::vector<std::vector<double>>& axes, const RVec& values, const std::vector<double>& x);

struct RoundResult {
  std::vector<double> u_next;
  std::vector<double> xhat;
  std::size_t round = 0;
  Phase phase = Phase::PreEstimation;
};

// Adaptive-phase round; the session is untouched when the posterior vanishes.
RoundResult submit_outcome(AdaptiveSession& s, int y);
// Pre-estimation rounds with u = 0; switches to the adaptive phase once pre_rounds are done.
RoundResult pre_estimate(AdaptiveSession& s, const std::vector<int>& y);
// One round in whichever phase the session is in.
RoundResult step(AdaptiveSession& s, int y);

std::string session_to_json(const AdaptiveSession& s);
AdaptiveSession session_from_json(const std::string& text);

// Outcome probabilities at a parameter point.
using OutcomeModel = std::function<RVec(const std::vector<double>& x)>;
OutcomeModel template_outcome_model(const std::string& template_id, const Constants& c, const Mat& rho0,
                                    const std::vector<double>& tspan, const std::vector<Decay>& decay, const Povm& M);

// Runs the session against a simulated experiment; y_n is drawn from p(y | x_true + u_n) with one
// uniform draw per round from the seeded generator, so two sessions given the same seed share the stream.
struct AdaptiveSimulation {
  std::vector<int> y;
  std::vector<std::vector<double>> xhat;
  AdaptiveSession session;
};
AdaptiveSimulation simulate_adaptive(AdaptiveSession s, const OutcomeModel& truth, const std::vector<double>& x_true,
                                     std::size_t rounds, std::uint64_t seed);

}  // namespace qmetro
