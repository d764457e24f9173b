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

// Fisher information, logarithmic derivatives and the Holevo bound.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qmetro/dynamics.hpp"

namespace qmetro {

enum class LdType { SLD, RLD, LLD };
LdType parse_ld_type(const std::string& s);
const char* to_string(LdType t);

struct LogDerivative {
  LdType kind = LdType::SLD;
  std::vector<Mat> ops;
  bool eigenbasis = false;  // ops expressed in rho's eigenbasis
  Mat basis;                // eigenvectors of rho (columns) when eigenbasis is set
};

struct InfoMatrix {
  std::vector<std::string> labels;
  RMat entries;
  Mat full;  // complex RLD/LLD matrix; empty for SLD and classical
  double scalar() const { return entries(0, 0); }
  Eigen::Index size() const { return entries.rows(); }
};

// Default eigenvalue threshold for pseudo-inverses.
inline constexpr double kEps = 1e-8;

LogDerivative sld(const DerivedState& ds, bool eigenbasis = false, double eps = kEps);
LogDerivative sld_vec(const DerivedState& ds, double eps = kEps);
LogDerivative rld(const DerivedState& ds, double eps = kEps);
LogDerivative lld(const DerivedState& ds, double eps = kEps);

InfoMatrix qfim(const DerivedState& ds, LdType ld = LdType::SLD, double eps = kEps,
                LogDerivative* export_ld = nullptr);
InfoMatrix qfim_kraus(const Mat& rho0, const KrausChannel& ch, LdType ld = LdType::SLD, double eps = kEps);
// M empty selects the SIC-POVM of the state's dimension.
InfoMatrix cfim(const DerivedState& ds, const Povm& M = {}, double eps = kEps);
InfoMatrix fim(const RVec& p, const std::vector<RVec>& dp, double eps = kEps);

// Cached SIC-POVM for dimension d.
const Povm& default_povm(int d);

void check_weight(const RMat& W, Eigen::Index n);

struct HcrbInfo {
  double gap = 0.0;
  int iterations = 0;
  bool redirected = false;
};
double hcrb(const DerivedState& ds, const RMat& W, double eps = kEps, HcrbInfo* info = nullptr);

struct TargetTime {
  bool found = false;
  double t = 0.0;
  double final_value = 0.0;
};
// First crossing of f_target along the trajectory, linearly interpolated.
TargetTime target_time(double f_target, const std::vector<DerivedState>& traj, const std::vector<double>& tspan,
                       const std::function<double(const DerivedState&)>& objective);

// Scalar figures used by optimizers and CLI tables.
double tr_w_inv(const RMat& F, const RMat& W);

}  // namespace qmetro
