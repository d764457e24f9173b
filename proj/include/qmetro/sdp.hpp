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

// Small dense semidefinite programs:
//
//   minimize c'y  subject to  F0 + sum_i y_i F_i >= 0,  A y = b.
//
// Equalities are eliminated through a null-space basis and the remaining
// LMI is solved by an infeasible-start primal-dual path-following method
// (HKM direction, Mehrotra predictor-corrector).

#pragma once

#include <vector>

#include "qmetro/types.hpp"

namespace qmetro {

struct SdpOptions {
  double tol = 1e-9;
  int max_iter = 200;
  double step_fraction = 0.98;
};

struct SdpResult {
  RVec y;
  double objective = 0.0;
  double gap = 0.0;  // |primal - dual|
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  int iterations = 0;
};

SdpResult solve_lmi(const RVec& c, const RMat& f0, const std::vector<RMat>& fi, const RMat& a_eq,
                    const RVec& b_eq, const SdpOptions& opt = {});

// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian H.
RMat real_embedding(const Mat& h);

}  // namespace qmetro
