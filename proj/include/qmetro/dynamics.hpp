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

#pragma once

#include <map>
#include <string>
#include <vector>

#include "qmetro/qcore.hpp"

namespace qmetro {

struct Decay {
  Mat op;
  double rate = 0.0;
};

// len(tspan) points define len(tspan)-1 piecewise-constant steps. H0 holds
// either one matrix or one per tspan entry (entry j drives the step ending at
// tspan[j]). ctrl[k] has Nc amplitudes, each held for Nt/Nc steps.
struct DynamicsSpec {
  std::vector<double> tspan;
  std::vector<Mat> H0;
  std::vector<Mat> dH;
  std::vector<Mat> Hc;
  std::vector<std::vector<double>> ctrl;
  std::vector<Decay> decay;

  std::size_t steps() const { return tspan.empty() ? 0 : tspan.size() - 1; }
  Eigen::Index dim() const { return H0.empty() ? 0 : H0.front().rows(); }
};

struct KrausChannel {
  std::vector<Mat> K;
  std::vector<std::vector<Mat>> dK;  // dK[i][a] = d K_i / d x_a
};

int adjust_steps(int nt, int nc);
std::vector<double> linspace(double a, double b, std::size_t n);

// Validates the spec and, when Nc does not divide the step count, resamples
// tspan uniformly onto adjust_steps(Nt, Nc) steps.
DynamicsSpec normalize_spec(const DynamicsSpec& spec);
// Per-step amplitudes: out[k][j] for control k on step j (0-based).
std::vector<std::vector<double>> step_controls(const DynamicsSpec& spec);

// Vectorized generators. L(t) = L0(t) + sum_k u_k(t) Lc[k]; A[a] = -i [dH_a, .].
struct Superops {
  Eigen::Index dim = 0;
  std::vector<Mat> L0;  // one, or one per tspan entry
  std::vector<Mat> Lc;
  std::vector<Mat> A;
  const Mat& free(std::size_t step_end) const { return L0.size() == 1 ? L0.front() : L0[step_end]; }
};
Mat liouvillian(const Mat& h, const std::vector<Decay>& decay);
Superops build_superops(const DynamicsSpec& spec);

std::vector<DerivedState> lindblad_propagate(const DynamicsSpec& spec, const Mat& rho0);
DerivedState lindblad_final(const DynamicsSpec& spec, const Mat& rho0);

// Final (rho, drho) as a linear function of rho0: vec(rho_T) = R vec(rho0), vec(drho_a) = D[a] vec(rho0).
struct TransferMap {
  Eigen::Index dim = 0;
  Mat R;
  std::vector<Mat> D;
  DerivedState apply(const Mat& rho0) const;
  // Adjoint: the rho0 sensitivity of Re Tr(g_rho^† rho_T) + sum_a Re Tr(g_drho[a]^† drho_a).
  Mat pullback(const Mat& g_rho, const std::vector<Mat>& g_drho) const;
};
TransferMap transfer_map(const DynamicsSpec& spec);

void check_channel(const KrausChannel& ch, double tol = 1e-6);
DerivedState kraus_apply(const Mat& rho0, const KrausChannel& ch);

// Flattened row-major over the axes (last axis fastest).
struct ModelGrid {
  std::vector<std::vector<double>> axes;
  std::vector<Mat> H;
  std::vector<std::vector<Mat>> dH;

  std::vector<std::size_t> shape() const;
  std::size_t size() const;
  std::vector<std::size_t> unravel(std::size_t flat) const;
  std::vector<double> point(std::size_t flat) const;
};

using Constants = std::map<std::string, double>;

struct ParamModel {
  Mat H;
  std::vector<Mat> dH;
};
// Evaluates a bundled parametric Hamiltonian at x. Unknown ids raise a config error.
ParamModel eval_template(const std::string& id, const Constants& c, const std::vector<double>& x);
std::size_t template_params(const std::string& id);
ModelGrid model_grid(const std::string& id, const Constants& c, const std::vector<std::vector<double>>& axes);

// Final (rho, drho) at tspan.back() for every grid point.
std::vector<DerivedState> evolve_grid(const ModelGrid& g, const Mat& rho0, const std::vector<double>& tspan,
                                      const std::vector<Decay>& decay);

}  // namespace qmetro
