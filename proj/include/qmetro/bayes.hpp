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

// Bayesian estimation and Bayesian bounds on discretized priors.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qmetro/asymptotic.hpp"
#include "qmetro/dynamics.hpp"

namespace qmetro {

// Values are flattened row-major over the axes (last axis fastest).
struct PriorGrid {
  std::vector<std::vector<double>> axes;
  RVec p;
  std::vector<RVec> dp;  // gradient of p per point; empty when absent
  std::vector<DerivedState> states;

  std::size_t size() const;  // number of grid points from the axes
  std::size_t nparams() const { return axes.size(); }
  std::vector<double> point(std::size_t flat) const;
};

struct BiasSpec {
  std::vector<RVec> b;   // per point, one entry per parameter
  std::vector<RVec> db;  // per point, d b_a / d x_a
  bool empty() const { return b.empty(); }
};

enum class Estimator { Mean, MAP };

// Trapezoid weights; a single-point axis integrates with weight 1.
RVec trapezoid_weights(const std::vector<double>& axis);
RVec grid_weights(const std::vector<std::vector<double>>& axes);
double integrate(const PriorGrid& g, const RVec& values);
void check_grid(const PriorGrid& g, bool need_states = true);
void normalize_prior(PriorGrid& g);

// p(y | x_i) for every outcome y and grid point i.
std::vector<RVec> likelihood_table(const PriorGrid& g, const Povm& M);
std::vector<double> estimate(const PriorGrid& g, const RVec& post, Estimator est);

struct BayesResult {
  RVec posterior;
  std::vector<RVec> history;  // every round when save_all
  std::vector<std::vector<double>> estimates;
};
BayesResult bayes_update(const PriorGrid& g, const Povm& M, const std::vector<int>& y, Estimator est = Estimator::MAP,
                         bool save_all = false);
BayesResult mle(const PriorGrid& g, const Povm& M, const std::vector<int>& y, bool save_all = false);

double bayes_cost(const PriorGrid& g, const std::vector<std::vector<double>>& xest, const Povm& M, const RMat& W);
double bcb(const PriorGrid& g, const RMat& W, double eps = kEps);

struct BoundResult {
  RMat value;
  bool pseudo_inverse = false;  // a singular inner matrix was pseudo-inverted
  double scalar() const { return value(0, 0); }
};
BoundResult bcrb(const PriorGrid& g, const Povm& M, const BiasSpec& bias, int btype, double eps = kEps);
BoundResult bqcrb(const PriorGrid& g, const BiasSpec& bias, int btype, LdType ld = LdType::SLD, double eps = kEps);
BoundResult vtb(const PriorGrid& g, const Povm& M, double eps = kEps);
BoundResult qvtb(const PriorGrid& g, LdType ld = LdType::SLD, double eps = kEps);
double qzzb(const PriorGrid& g, double eps = kEps);
RMat avg_cfim(const PriorGrid& g, const Povm& M, double eps = kEps);
RMat avg_qfim(const PriorGrid& g, LdType ld = LdType::SLD, double eps = kEps);

int sample_outcome(const RVec& probs, std::mt19937_64& rng);
std::vector<int> simulate_outcomes(const Mat& rho, const Povm& M, std::size_t n, std::uint64_t seed);

// Grid with states evolved from a bundled template; p and dp supplied by the caller.
PriorGrid make_prior_grid(const std::string& template_id, const Constants& c,
                          const std::vector<std::vector<double>>& axes, const Mat& rho0,
                          const std::vector<double>& tspan, const std::vector<Decay>& decay);
// Truncated Gaussian on one axis with its analytic derivative, normalized on the grid.
void set_gaussian_prior(PriorGrid& g, double mu, double eta);
void set_uniform_prior(PriorGrid& g);

// Qubit rotation template from |+>, uniform prior on n points of [lo, hi].
PriorGrid bayes_demo_grid(double lo, double hi, std::size_t n, double kappa = M_PI / 2.0, double T = 1.0);
Povm plus_minus_povm();

}  // namespace qmetro
