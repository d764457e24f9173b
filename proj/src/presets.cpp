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

#include "qmetro/presets.hpp"

#include <cmath>
#include <sstream>

namespace qmetro {

namespace {

double get(const Constants& c, const std::string& key, double fallback) {
  auto it = c.find(key);
  return it == c.end() ? fallback : it->second;
}

Mat sigma_plus() { return (pauli(1) + kI * pauli(2)) / 2.0; }
Mat sigma_minus() { return (pauli(1) - kI * pauli(2)) / 2.0; }

struct NvOps {
  Mat S[3];
  Mat I[3];
};

NvOps nv_ops() {
  NvOps o;
  const Mat i2 = Mat::Identity(2, 2);
  const Mat i3 = Mat::Identity(3, 3);
  for (int k = 0; k < 3; ++k) {
    o.S[k] = kron(spin_op(1.0, k + 1), i2);
    o.I[k] = kron(i3, pauli(k + 1));
  }
  return o;
}

// Default NV constants in rad/us with fields in mT.
const double kTwoPi = 2.0 * M_PI;

}  // namespace

Mat spin_op(double j, int axis) {
  const int n = static_cast<int>(std::lround(2.0 * j)) + 1;
  Mat jp = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double m = j - i;
    jp(i - 1, i) = std::sqrt(j * (j + 1.0) - m * (m + 1.0));
  }
  const Mat jm = jp.adjoint();
  switch (axis) {
    case 1: return (jp + jm) / 2.0;
    case 2: return (jp - jm) / (2.0 * kI);
    case 3: {
      Mat z = Mat::Zero(n, n);
      for (int i = 0; i < n; ++i) z(i, i) = j - i;
      return z;
    }
    default: fail(ErrorKind::Domain, "spin_op: axis must be 1, 2 or 3");
  }
}

Vec plus_state() {
  Vec v(2);
  v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  return v;
}

std::size_t template_params(const std::string& id) {
  if (id == "bayes_demo" || id == "qubit_frequency" || id == "lmg_g") return 1;
  if (id == "two_qubit_xx" || id == "lmg") return 2;
  if (id == "nv_center") return 3;
  fail(ErrorKind::Config, "unknown model template '" + id + "'");
}

ParamModel eval_template(const std::string& id, const Constants& c, const std::vector<double>& x) {
  if (x.size() != template_params(id)) fail(ErrorKind::Dimension, "wrong number of parameters for '" + id + "'");
  ParamModel m;
  if (id == "bayes_demo") {
    const double amp = get(c, "kappa", M_PI / 2.0) * get(c, "omega0", 1.0) / 2.0;
    m.H = amp * (pauli(1) * std::cos(x[0]) + pauli(3) * std::sin(x[0]));
    m.dH = {amp * (-pauli(1) * std::sin(x[0]) + pauli(3) * std::cos(x[0]))};
  } else if (id == "qubit_frequency") {
    m.H = x[0] * pauli(3) / 2.0;
    m.dH = {pauli(3) / 2.0};
  } else if (id == "two_qubit_xx") {
    const double w1 = get(c, "omega1", 1.0);
    const Mat i2 = Mat::Identity(2, 2);
    const Mat z1 = kron(pauli(3), i2);
    const Mat z2 = kron(i2, pauli(3));
    const Mat xx = kron(pauli(1), pauli(1));
    m.H = w1 * z1 + x[0] * z2 + x[1] * xx;
    m.dH = {z2, xx};
  } else if (id == "nv_center") {
    const NvOps o = nv_ops();
    const double D = get(c, "D", kTwoPi * 2870.0);
    const double gS = get(c, "gS", kTwoPi * 28.03);
    const double gI = get(c, "gI", kTwoPi * 4.32e-3);
    const double A1 = get(c, "A1", kTwoPi * 3.65);
    const double A2 = get(c, "A2", kTwoPi * 3.03);
    const double A[3] = {A1, A1, A2};
    m.H = D * o.S[2] * o.S[2];
    for (int k = 0; k < 3; ++k) {
      m.H += gS * x[k] * o.S[k] + gI * x[k] * o.I[k] + A[k] * o.S[k] * o.I[k];
      m.dH.push_back(gS * o.S[k] + gI * o.I[k]);
    }
  } else {
    const int n = static_cast<int>(get(c, "N", 4.0));
    const double lam = get(c, "lambda", 1.0);
    const double j = n / 2.0;
    const Mat j1 = spin_op(j, 1);
    const Mat j2 = spin_op(j, 2);
    const Mat j3 = spin_op(j, 3);
    const double g = x[0];
    const double h = id == "lmg" ? x[1] : get(c, "h", 0.1);
    m.H = -(lam / n) * (j1 * j1 + g * j2 * j2) - h * j3;
    m.dH = {-(lam / n) * j2 * j2};
    if (id == "lmg") m.dH.push_back(-j3);
  }
  return m;
}

Preset preset_qubit_unitary(double T, std::size_t steps, double omega) {
  Preset p;
  p.id = "qubit_unitary";
  p.params = {"omega"};
  p.spec.tspan = linspace(0.0, T, steps + 1);
  p.spec.H0 = {omega * pauli(3) / 2.0};
  p.spec.dH = {pauli(3) / 2.0};
  p.rho0 = ket_projector(plus_state());
  Vec minus(2);
  minus << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
  p.M.ops = {ket_projector(plus_state()), ket_projector(minus)};
  p.W = RMat::Identity(1, 1);
  return p;
}

Preset preset_me_spon(double T, std::size_t steps, double gamma_plus, double gamma_minus, bool controls,
                      double omega) {
  Preset p = preset_qubit_unitary(T, steps, omega);
  p.id = controls ? "me_spon_ctrl" : "me_spon";
  p.spec.decay = {{sigma_plus(), gamma_plus}, {sigma_minus(), gamma_minus}};
  if (controls) {
    p.spec.Hc = {pauli(1), pauli(2), pauli(3)};
    p.spec.ctrl.assign(3, std::vector<double>(steps, 0.0));
  }
  return p;
}

Preset preset_two_qubit_xx(double T, std::size_t steps) {
  Preset p;
  p.id = "two_qubit_xx";
  p.params = {"omega2", "g"};
  auto m = eval_template("two_qubit_xx", {}, {1.0, 0.1});
  p.spec.tspan = linspace(0.0, T, steps + 1);
  p.spec.H0 = {m.H};
  p.spec.dH = m.dH;
  const Mat i2 = Mat::Identity(2, 2);
  p.spec.decay = {{kron(pauli(3), i2), 0.05}, {kron(i2, pauli(3)), 0.05}};
  Vec bell = Vec::Zero(4);
  bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
  p.rho0 = ket_projector(bell);
  Vec k00 = Vec::Zero(4);
  k00(0) = 1.0;
  Vec kpp = Vec::Constant(4, 0.5);
  const Mat p1 = 0.85 * ket_projector(k00);
  const Mat p2 = 0.1 * ket_projector(kpp);
  p.M.ops = {p1, p2, Mat::Identity(4, 4) - p1 - p2};
  p.W = RMat::Identity(2, 2);
  return p;
}

Preset preset_nv_center(double T, std::size_t steps, bool controls) {
  Preset p;
  p.id = "nv_center";
  p.params = {"B1", "B2", "B3"};
  auto m = eval_template("nv_center", {}, {0.5, 0.5, 0.5});
  p.spec.tspan = linspace(0.0, T, steps + 1);
  p.spec.H0 = {m.H};
  p.spec.dH = m.dH;
  const NvOps o = nv_ops();
  p.spec.decay = {{o.S[2], kTwoPi * 1.0}};
  if (controls) {
    p.spec.Hc = {o.S[0], o.S[1], o.S[2]};
    p.spec.ctrl.assign(3, std::vector<double>(steps, 0.0));
  }
  // (|1> + |-1>)|up>/sqrt(2) with the electron basis ordered m = 1, 0, -1
  Vec psi = Vec::Zero(6);
  psi(0) = psi(4) = 1.0 / std::sqrt(2.0);
  p.rho0 = ket_projector(psi);
  p.W = RMat::Identity(3, 3);
  return p;
}

Mat lmg_coherent_state(int n_spins, double theta, double phi) {
  const double j = n_spins / 2.0;
  const Mat jp = spin_op(j, 1) + kI * spin_op(j, 2);
  const Mat jm = jp.adjoint();
  const Mat gen = -(theta / 2.0) * std::polar(1.0, -phi) * jp + (theta / 2.0) * std::polar(1.0, phi) * jm;
  Vec top = Vec::Zero(n_spins + 1);
  top(0) = 1.0;
  Vec psi = expm(gen) * top;
  return ket_projector(psi);
}

Preset preset_lmg(int n_spins, double T, std::size_t steps, bool two_params) {
  Preset p;
  p.id = "lmg";
  Constants c{{"N", static_cast<double>(n_spins)}};
  auto m = two_params ? eval_template("lmg", c, {0.5, 0.1}) : eval_template("lmg_g", c, {0.5});
  p.params = two_params ? std::vector<std::string>{"g", "h"} : std::vector<std::string>{"g"};
  p.spec.tspan = linspace(0.0, T, steps + 1);
  p.spec.H0 = {m.H};
  p.spec.dH = m.dH;
  p.rho0 = lmg_coherent_state(n_spins, M_PI / 2.0, M_PI / 2.0);
  p.W = RMat::Identity(p.params.size(), p.params.size());
  return p;
}

std::vector<std::string> preset_names() {
  return {"qubit_unitary", "me_spon", "me_spon_ctrl", "two_qubit_xx", "nv_center", "lmg"};
}

Preset preset_by_name(const std::string& name, double T, std::size_t steps) {
  if (name == "qubit_unitary") return preset_qubit_unitary(T, steps);
  if (name == "me_spon") return preset_me_spon(T, steps);
  if (name == "me_spon_ctrl") return preset_me_spon(T, steps, 0.0, 0.1, true);
  if (name == "two_qubit_xx") return preset_two_qubit_xx(T, steps);
  if (name == "nv_center") return preset_nv_center(T, steps);
  if (name == "lmg") return preset_lmg(4, T, steps);
  std::ostringstream os;
  os << "unknown preset '" << name << "'";
  fail(ErrorKind::Config, os.str());
}

}  // namespace qmetro
