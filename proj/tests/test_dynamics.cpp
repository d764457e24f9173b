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

#include <cmath>

#include "doctest.h"
#include "qmetro/asymptotic.hpp"
#include "qmetro/dynamics.hpp"
#include "qmetro/presets.hpp"

using namespace qmetro;

namespace {
double maxabs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

double pure_state_qfi(double t) {
  // |psi(t)> = (e^{-it/2}|0> + e^{it/2}|1>)/sqrt2, d|psi>/domega = -i t sigma_z/2 |psi>
  Vec psi(2);
  psi << std::polar(1.0, -t / 2) / std::sqrt(2.0), std::polar(1.0, t / 2) / std::sqrt(2.0);
  Vec dpsi = -kI * t * pauli(3) / 2.0 * psi;
  return 4.0 * (dpsi.squaredNorm() - std::norm(psi.dot(dpsi)));
}
}  // namespace

TEST_CASE("adjust_steps") {
  CHECK(adjust_steps(100, 3) == 102);
  CHECK(adjust_steps(100, 10) == 100);
  CHECK(adjust_steps(7, 7) == 7);
  CHECK(adjust_steps(5, 2) == 6);
  CHECK_THROWS_AS(adjust_steps(0, 2), Error);
}

TEST_CASE("unitary qubit QFI follows the pure-state formula") {
  auto p = preset_qubit_unitary(5.0, 500);
  auto traj = lindblad_propagate(p.spec, p.rho0);
  REQUIRE(traj.size() == 501);
  for (std::size_t j : {100u, 200u, 350u, 500u}) {
    const double t = p.spec.tspan[j];
    const double f = qfim(traj[j]).scalar();
    CHECK(std::abs(f - pure_state_qfi(t)) < 1e-6);
    CHECK(std::abs(f - t * t) < 1e-6);
  }
  CHECK(maxabs(traj[0].drho[0]) == 0.0);
}

TEST_CASE("pure dephasing decays coherences at rate 2 gamma") {
  DynamicsSpec s;
  s.tspan = linspace(0.0, 3.0, 301);
  s.H0 = {Mat::Zero(2, 2)};
  const double gamma = 0.2;
  s.decay = {{pauli(3), gamma}};
  const Mat rho0 = ket_projector(plus_state());
  auto traj = lindblad_propagate(s, rho0);
  for (std::size_t j = 0; j < traj.size(); j += 50)
    CHECK(std::abs(std::abs(traj[j].rho(0, 1)) - 0.5 * std::exp(-2 * gamma * s.tspan[j])) < 1e-6);
}

TEST_CASE("zero controls reproduce the control-free trajectory") {
  auto a = preset_me_spon(2.0, 200, 0.0, 0.1, false);
  auto b = preset_me_spon(2.0, 200, 0.0, 0.1, true);
  auto ta = lindblad_propagate(a.spec, a.rho0);
  auto tb = lindblad_propagate(b.spec, b.rho0);
  for (std::size_t j = 0; j < ta.size(); ++j) {
    CHECK(maxabs(ta[j].rho - tb[j].rho) < 1e-14);
    CHECK(maxabs(ta[j].drho[0] - tb[j].drho[0]) < 1e-14);
  }
}

TEST_CASE("trace preservation along preset trajectories") {
  std::vector<Preset> ps = {preset_me_spon(5.0, 500), preset_two_qubit_xx(5.0, 500), preset_nv_center(0.01, 200),
                            preset_lmg(4, 2.0, 200)};
  for (auto& p : ps) {
    if (!p.spec.ctrl.empty())
      for (auto& c : p.spec.ctrl)
        for (std::size_t j = 0; j < c.size(); ++j) c[j] = 10.0 * std::sin(0.1 * j);
    auto traj = lindblad_propagate(p.spec, p.rho0);
    double worst = 0.0;
    for (const auto& ds : traj) worst = std::max(worst, std::abs(ds.rho.trace() - cplx(1.0)));
    CHECK(worst <= 1e-8);
    CHECK_NOTHROW(check_derived(traj.back()));
  }
}

TEST_CASE("derivative matches central finite differences on the decaying qubit") {
  const double w = 1.0, dx = 1e-5;
  auto base = preset_me_spon(5.0, 500, 0.0, 0.1, false, w);
  auto plus = preset_me_spon(5.0, 500, 0.0, 0.1, false, w + dx);
  auto minus = preset_me_spon(5.0, 500, 0.0, 0.1, false, w - dx);
  auto ds = lindblad_final(base.spec, base.rho0);
  Mat fd = (lindblad_final(plus.spec, plus.rho0).rho - lindblad_final(minus.spec, minus.rho0).rho) / (2 * dx);
  CHECK(maxabs(ds.drho[0] - fd) / maxabs(fd) < 1e-4);
}

TEST_CASE("halving the step leaves endpoints unchanged at documented step counts") {
  struct Case {
    Preset coarse, fine;
  };
  std::vector<Case> cases = {
      {preset_me_spon(20.0, 2000), preset_me_spon(20.0, 4000)},
      {preset_two_qubit_xx(10.0, 1000), preset_two_qubit_xx(10.0, 2000)},
      {preset_lmg(4, 10.0, 1000), preset_lmg(4, 10.0, 2000)},
      {preset_nv_center(0.01, 200, false), preset_nv_center(0.01, 400, false)},
  };
  for (auto& c : cases) {
    auto a = lindblad_final(c.coarse.spec, c.coarse.rho0);
    auto b = lindblad_final(c.fine.spec, c.fine.rho0);
    CHECK(maxabs(a.rho - b.rho) <= 1e-6);
  }
}

TEST_CASE("control resampling when Nc does not divide the step count") {
  auto p = preset_me_spon(1.0, 100, 0.0, 0.1, true);
  p.spec.ctrl.assign(3, std::vector<double>(3, 0.2));
  auto s = normalize_spec(p.spec);
  CHECK(s.steps() == 102);
  CHECK(s.tspan.back() == doctest::Approx(1.0));
  auto u = step_controls(s);
  CHECK(u[0].size() == 102);
}

TEST_CASE("dynamics input validation") {
  auto p = preset_qubit_unitary(1.0, 10);
  auto bad = p.spec;
  bad.tspan = {0.0, 0.5, 0.4};
  CHECK_THROWS_AS(lindblad_propagate(bad, p.rho0), Error);
  CHECK_THROWS_AS(lindblad_propagate(p.spec, Mat(Mat::Identity(3, 3) / 3.0)), Error);
  auto neg = p.spec;
  neg.decay = {{pauli(3), -0.1}};
  CHECK_THROWS_AS(lindblad_propagate(neg, p.rho0), Error);
}

TEST_CASE("Kraus channels") {
  const Mat rho0 = random_density(2, 5);
  KrausChannel id{{Mat::Identity(2, 2)}, {{Mat::Zero(2, 2)}}};
  auto ds = kraus_apply(rho0, id);
  CHECK(maxabs(ds.rho - rho0) < 1e-15);
  CHECK(maxabs(ds.drho[0]) == 0.0);

  const double t = 2.0;
  const Mat k = expm(-kI * t * pauli(3) / 2.0);
  KrausChannel u{{k}, {{Mat(-kI * t * pauli(3) / 2.0 * k)}}};
  const Mat plus = ket_projector(plus_state());
  auto dk = kraus_apply(plus, u);
  auto pr = preset_qubit_unitary(t, 400);
  auto dl = lindblad_final(pr.spec, plus);
  CHECK(maxabs(dk.rho - dl.rho) < 1e-8);
  CHECK(maxabs(dk.drho[0] - dl.drho[0]) < 1e-8);

  const double p = 0.3;
  KrausChannel dep;
  dep.K.push_back(std::sqrt(1 - 3 * p / 4) * Mat::Identity(2, 2));
  for (int i = 1; i <= 3; ++i) dep.K.push_back(std::sqrt(p / 4) * pauli(i));
  CHECK(std::abs(kraus_apply(rho0, dep).rho.trace() - cplx(1.0)) < 1e-12);

  KrausChannel broken{{0.9 * Mat::Identity(2, 2)}, {}};
  CHECK_THROWS_AS(kraus_apply(rho0, broken), Error);
}

TEST_CASE("model grids") {
  const double kappa = M_PI / 2;
  auto g = model_grid("bayes_demo", {{"kappa", kappa}}, {{0.0, 0.5}});
  CHECK(maxabs(g.H[0] - kappa * pauli(1) / 2.0) < 1e-15);
  CHECK(maxabs(g.dH[0][0] - kappa * pauli(3) / 2.0) < 1e-15);
  // analytic derivative of the template against differences
  auto hp = eval_template("bayes_demo", {}, {0.5 + 1e-6}).H;
  auto hm = eval_template("bayes_demo", {}, {0.5 - 1e-6}).H;
  CHECK(maxabs((hp - hm) / 2e-6 - g.dH[1][0]) < 1e-8);

  auto single = model_grid("qubit_frequency", {}, {{1.0}});
  CHECK(single.size() == 1);
  CHECK(single.shape() == std::vector<std::size_t>{1});

  auto two = model_grid("two_qubit_xx", {}, {{0.9, 1.0, 1.1}, {0.1, 0.2}});
  CHECK(two.size() == 6);
  CHECK(two.point(3) == std::vector<double>{1.0, 0.2});

  CHECK_THROWS_AS(model_grid("nope", {}, {{0.0}}), Error);
  CHECK_THROWS_AS(model_grid("bayes_demo", {}, {{0.0}, {1.0}}), Error);
}

TEST_CASE("NV preset structure") {
  auto p = preset_nv_center(0.01, 100);
  CHECK(p.spec.H0[0].rows() == 6);
  CHECK(p.spec.dH.size() == 3);
  CHECK(p.spec.Hc.size() == 3);
  CHECK(is_hermitian(p.spec.H0[0], 1e-9));
  CHECK(std::abs(p.rho0.trace() - cplx(1.0)) < 1e-15);
}

TEST_CASE("LMG coherent state is an eigenstate of J_y with eigenvalue J") {
  for (int n : {2, 4, 6}) {
    Mat rho = lmg_coherent_state(n, M_PI / 2, M_PI / 2);
    Mat jy = spin_op(n / 2.0, 2);
    CHECK(std::abs((rho * jy).trace().real() - n / 2.0) < 1e-10);
  }
}
