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

// Bundled example systems.

#pragma once

#include <string>
#include <vector>

#include "qmetro/dynamics.hpp"

namespace qmetro {

struct Preset {
  std::string id;
  std::vector<std::string> params;
  DynamicsSpec spec;
  Mat rho0;
  Povm M;  // empty when the preset does not fix a measurement
  RMat W;
};

Mat spin_op(double j, int axis);  // spin-j matrices in the |j,m> basis, m = j..-j
Vec plus_state();

// H = omega sigma_z / 2 on |+>, no decay.
Preset preset_qubit_unitary(double T, std::size_t steps, double omega = 1.0);
// Same qubit with sigma_+/sigma_- decay channels and optional sigma_x,y,z controls.
Preset preset_me_spon(double T, std::size_t steps, double gamma_plus = 0.0, double gamma_minus = 0.1,
                      bool controls = false, double omega = 1.0);
// Two qubits with an XX coupling, estimating (omega2, g) under local dephasing.
Preset preset_two_qubit_xx(double T, std::size_t steps);
// NV center electron spin-1 with a nuclear spin-1/2; estimates the magnetic field (B1, B2, B3).
Preset preset_nv_center(double T, std::size_t steps, bool controls = true);
// LMG model in the Dicke basis with the coherent probe |pi/2, pi/2>; params {"g"} or {"g","h"}.
Preset preset_lmg(int n_spins, double T, std::size_t steps, bool two_params = false);

Mat lmg_coherent_state(int n_spins, double theta, double phi);

Preset preset_by_name(const std::string& name, double T, std::size_t steps);
std::vector<std::string> preset_names();

}  // namespace qmetro
