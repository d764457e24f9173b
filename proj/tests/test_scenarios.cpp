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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "qmetro/presets.hpp"
#include "qmetro/scenarios.hpp"

using namespace qmetro;

namespace {

double uncontrolled(const Preset& p, const ObjectiveSpec& obj = {}) {
  DynamicsSpec s = p.spec;
  s.Hc.clear();
  s.ctrl.clear();
  return objective_value(lindblad_final(s, p.rho0), obj);
}

AlgoParams quick(Algorithm a, Task t, int episodes, std::uint64_t seed = 1234) {
  AlgoParams p = default_params(a, t);
  p.max_episode = episodes;
  p.seed = seed;
  return p;
}

KrausChannel unitary_phase(double t) {
  KrausChannel ch;
  const Mat gen = pauli(3) / 2.0;
  const Mat k = expm(-kI * t * gen);
  ch.K = {k};
  ch.dK = {{Mat(-kI * t * gen * k)}};
  return ch;
}

// Amplitude damping with rate parameter; dK by central difference is avoided by closed forms.
KrausChannel damped_phase(double t, double g) {
  const double e = std::exp(-g * t);
  const cplx ph = std::exp(cplx(0.0, -0.5 * t));
  Mat k0 = Mat::Zero(2, 2), k1 = Mat::Zero(2, 2);
  k0(0, 0) = std::conj(ph);
  k0(1, 1) = ph * std::sqrt(e);
  k1(0, 1) = std::sqrt(1.0 - e);
  Mat d0 = Mat::Zero(2, 2);
  d0(0, 0) = cplx(0.0, 0.5) * std::conj(ph);
  d0(1, 1) = cplx(0.0, -0.5) * ph * std::sqrt(e);
  KrausChannel ch;
  ch.K = {k0, k1};
  ch.dK = {{d0}, {Mat::Zero(2, 2)}};
  return ch;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

template <typename F>
RVec fd_gradient(F f, const RVec& x, double h = 1e-6) {
  RVec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    RVec a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

Povm basis_povm(int d) {
  Povm m;
  for (int i = 0; i < d; ++i) m.ops.push_back(ket_projector(Vec::Unit(d, i)));
  return m;
}

DerivedState random_ds(int d, int n, std::uint64_t seed) {
  DerivedState ds;
  ds.rho = 0.7 * random_density(d, seed) + 0.3 * Mat::Identity(d, d) / static_cast<double>(d);
  for (int a = 0; a < n; ++a) {
    Mat h = random_hermitian(d, seed + 10 * (a + 1));
    ds.drho.push_back(h - h.trace() / static_cast<double>(d) * Mat::Identity(d, d));
  }
  return ds;
}

double cfim_objective(const DerivedState& ds, const Povm& M, const RMat& W = {}) {
  ObjectiveSpec o;
  o.kind = ObjectiveKind::CFIM;
  o.M = M;
  o.W = W;
  return objective_value(ds, o);
}

}  // namespace

TEST_CASE("transfer map reproduces propagation and its adjoint") {
  Preset p = preset_two_qubit_xx(1.5, 60);
  const TransferMap tm = transfer_map(p.spec);
  const Mat rho0 = random_density(4, 3);
  const DerivedState a = tm.apply(rho0), b = lindblad_final(p.spec, rho0);
  CHECK((a.rho - b.rho).cwiseAbs().maxCoeff() < 1e-12);
  for (int k = 0; k < 2; ++k) CHECK((a.drho[k] - b.drho[k]).cwiseAbs().maxCoeff() < 1e-12);
  const Mat g = random_hermitian(4, 5), x = random_hermitian(4, 6);
  const std::vector<Mat> gd = {random_hermitian(4, 7), random_hermitian(4, 8)};
  const DerivedState lx = tm.apply(x);
  double lhs = (g.adjoint() * lx.rho).trace().real();
  for (int k = 0; k < 2; ++k) lhs += (gd[k].adjoint() * lx.drho[k]).trace().real();
  CHECK((tm.pullback(g, gd).adjoint() * x).trace().real() == doctest::Approx(lhs).epsilon(1e-12));
}

TEST_CASE("control codec round trip and bounds") {
  const ControlTable c = {{1.0, 2.0, 3.0}, {-1.0, -2.0, -3.0}};
  CHECK(decode_controls(encode_controls(c), 2, 3) == c);
  CHECK_THROWS_AS(decode_controls(encode_controls(c), 3, 3), Error);
  const Codec codec = control_codec(2, 3, Bound{-0.5, 0.25});
  RVec x = encode_controls(c);
  codec.project(x);
  CHECK(x.maxCoeff() == 0.25);
  CHECK(x.minCoeff() == -0.5);
  std::mt19937_64 rng(1);
  const RVec r = codec.random(rng);
  CHECK(r.maxCoeff() <= 0.25);
  CHECK(r.minCoeff() >= -0.5);
}

TEST_CASE("constant control never worsens the uncontrolled value") {
  const Preset p = preset_me_spon(5.0, 100, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, {}, 1};
  for (Algorithm a : {Algorithm::PSO, Algorithm::DE}) {
    const auto r = control_opt(prob, quick(a, Task::Control, 5));
    CHECK(r.run.best_value >= uncontrolled(p) - 1e-12);
    CHECK(r.ctrl.size() == 3);
    CHECK(r.ctrl[0].size() == 1);
  }
}

TEST_CASE("gradient control improves and both gradient routes agree") {
  const Preset p = preset_me_spon(5.0, 200, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, {}, 20};
  const auto a = control_opt(prob, quick(Algorithm::AutoGRAPE, Task::Control, 40));
  const auto g = control_opt(prob, quick(Algorithm::GRAPE, Task::Control, 40));
  CHECK(a.run.values.front() == doctest::Approx(uncontrolled(p)).epsilon(1e-10));
  CHECK(a.run.best_value > uncontrolled(p) * 1.05);
  for (std::size_t i = 0; i < 10; ++i) CHECK(a.run.values[i] == doctest::Approx(g.run.values[i]).epsilon(1e-8));
  CHECK(objective_value(lindblad_final(a.spec, p.rho0), {}) == doctest::Approx(a.run.best_value).epsilon(1e-12));
}

TEST_CASE("emitted controls respect the bound exactly") {
  const Preset p = preset_me_spon(5.0, 100, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, Bound{-0.2, 0.2}, 10};
  for (Algorithm a : {Algorithm::AutoGRAPE, Algorithm::PSO, Algorithm::DE}) {
    AlgoParams ap = quick(a, Task::Control, 30);
    ap.epsilon = 0.5;
    const auto r = control_opt(prob, ap);
    for (const auto& row : r.ctrl)
      for (double u : row) {
        CHECK(u >= -0.2);
        CHECK(u <= 0.2);
      }
  }
  prob.bound = Bound{0.5, 1.0};
  const auto r = control_opt(prob, quick(Algorithm::PSO, Task::Control, 2));
  for (const auto& row : r.ctrl)
    for (double u : row) CHECK(u >= 0.5);
}

TEST_CASE("control problem errors") {
  const Preset p = preset_me_spon(2.0, 20, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, {}, 0};
  prob.obj.kind = ObjectiveKind::HCRB;
  CHECK_THROWS_WITH_AS(control_opt(prob, quick(Algorithm::PSO, Task::Control, 1)), doctest::Contains("QFIM"), Error);
  Preset xx = preset_two_qubit_xx(1.0, 10);
  xx.spec.Hc = {kron(pauli(1), Mat::Identity(2, 2))};
  ControlProblem h{xx.spec, xx.rho0, {}, {}, 0};
  h.obj.kind = ObjectiveKind::HCRB;
  CHECK_THROWS_AS(control_opt(h, quick(Algorithm::GRAPE, Task::Control, 1)), Error);
  ControlProblem q = prob;
  q.obj = {};
  CHECK_THROWS_AS(control_opt(q, quick(Algorithm::NM, Task::Control, 1)), Error);
  q.obj.ld = LdType::RLD;
  CHECK_THROWS_AS(control_opt(q, quick(Algorithm::AutoGRAPE, Task::Control, 1)), Error);
  q.obj = {};
  q.bound = Bound{1.0, -1.0};
  CHECK_THROWS_AS(control_opt(q, quick(Algorithm::DE, Task::Control, 1)), Error);
  q.bound.reset();
  CHECK_THROWS_AS(control_opt(q, quick(Algorithm::DE, Task::Control, 1), {ControlTable{{0.0}}}), Error);
  DynamicsSpec none = p.spec;
  none.Hc.clear();
  none.ctrl.clear();
  CHECK_THROWS_AS(control_opt(ControlProblem{none, p.rho0, {}, {}, 0}, quick(Algorithm::DE, Task::Control, 1)),
                  Error);
}

TEST_CASE("HCRB control objective with a population method") {
  Preset xx = preset_two_qubit_xx(1.0, 10);
  xx.spec.Hc = {kron(pauli(1), Mat::Identity(2, 2))};
  xx.spec.ctrl.clear();
  ControlProblem h{xx.spec, xx.rho0, {}, {}, 1};
  h.obj.kind = ObjectiveKind::HCRB;
  AlgoParams ap = quick(Algorithm::PSO, Task::Control, 2);
  ap.p_num = 3;
  const auto r = control_opt(h, ap);
  DynamicsSpec s = xx.spec;
  s.Hc.clear();
  CHECK(r.run.best_value >= 1.0 / hcrb(lindblad_final(s, xx.rho0), RMat::Identity(2, 2)) - 1e-9);
}

TEST_CASE("expanding Nc does not lose performance") {
  const Preset p = preset_me_spon(5.0, 60, 0.0, 0.1, true);
  std::vector<double> v1, v6;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    ControlProblem prob{p.spec, p.rho0, {}, Bound{-1.0, 1.0}, 1};
    v1.push_back(control_opt(prob, quick(Algorithm::DE, Task::Control, 60, s)).run.best_value);
    prob.Nc = 6;
    v6.push_back(control_opt(prob, quick(Algorithm::DE, Task::Control, 60, s)).run.best_value);
  }
  CHECK(median(v6) >= median(v1) * 0.99);
}

TEST_CASE("optimizer determinism for control runs") {
  const Preset p = preset_me_spon(2.0, 40, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, {}, 4};
  for (Algorithm a : {Algorithm::PSO, Algorithm::DE, Algorithm::AutoGRAPE}) {
    const auto x = control_opt(prob, quick(a, Task::Control, 8));
    const auto y = control_opt(prob, quick(a, Task::Control, 8));
    CHECK(x.run.values == y.run.values);
    CHECK(x.ctrl == y.ctrl);
  }
}

TEST_CASE("state gradient matches finite differences along the sphere") {
  StateProblem dyn;
  dyn.model.dynamics = preset_two_qubit_xx(1.0, 50).spec;
  StateProblem kr;
  kr.model.kraus = damped_phase(1.3, 0.2);
  StateProblem cl = kr;
  cl.obj.kind = ObjectiveKind::CFIM;
  for (const StateProblem* prob : {&dyn, &kr, &cl}) {
    const Eigen::Index d = prob->model.dim();
    for (std::uint64_t s = 1; s <= 3; ++s) {
      const Vec psi = random_unitary(static_cast<int>(d), s).col(0);
      RVec g;
      const double v = state_gradient(*prob, psi, g);
      CHECK(v == doctest::Approx(objective_value(
                     prob->model.dynamics ? lindblad_final(*prob->model.dynamics, ket_projector(psi))
                                          : kraus_apply(ket_projector(psi), *prob->model.kraus),
                     prob->obj)));
      Vec dir = random_unitary(static_cast<int>(d), s + 40).col(1);
      dir -= psi * psi.dot(dir).real();  // tangent: Re<psi, dir> = 0
      auto f = [&](double h) {
        const Vec q = (psi + h * dir).normalized();
        RVec unused;
        return state_gradient(*prob, q, unused);
      };
      const double fd = (f(1e-6) - f(-1e-6)) / 2e-6;
      const double an = g.dot(encode_state(dir));
      CHECK(an == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("state optimization on a unitary Kraus channel") {
  StateProblem prob;
  prob.model.kraus = unitary_phase(2.0);
  const auto ri = state_opt(prob, default_params(Algorithm::RI, Task::State));
  CHECK(std::abs(ri.run.best_value - 4.0) < 1e-6);
  const auto g = state_opt(prob, default_params(Algorithm::AD, Task::State));
  CHECK(g.run.best_value == doctest::Approx(4.0).epsilon(1e-4));
  const auto nm = state_opt(prob, quick(Algorithm::NM, Task::State, 200));
  CHECK(nm.run.best_value == doctest::Approx(4.0).epsilon(1e-4));
  const auto again = state_opt(prob, default_params(Algorithm::RI, Task::State), {ri.psi});
  CHECK(std::abs(again.run.best_value - ri.run.best_value) < 1e-8);
  const auto de = state_opt(prob, quick(Algorithm::DE, Task::State, 1), {ri.psi});
  CHECK(de.run.best_value >= ri.run.best_value - 1e-8);
}

TEST_CASE("state optimization errors") {
  StateProblem prob;
  prob.model.dynamics = preset_me_spon(1.0, 10).spec;
  CHECK_THROWS_AS(state_opt(prob, default_params(Algorithm::RI, Task::State)), Error);
  CHECK_THROWS_AS(state_opt(prob, quick(Algorithm::GRAPE, Task::State, 1)), Error);
  CHECK_THROWS_AS(state_opt(prob, quick(Algorithm::AD, Task::State, 1), {Vec::Ones(3)}), Error);
  CHECK_THROWS_AS(state_opt(StateProblem{}, quick(Algorithm::AD, Task::State, 1)), Error);
  StateProblem xx;
  xx.model.dynamics = preset_two_qubit_xx(1.0, 10).spec;
  xx.obj.kind = ObjectiveKind::HCRB;
  CHECK_THROWS_AS(state_opt(xx, quick(Algorithm::AD, Task::State, 1)), Error);
  AlgoParams nm = quick(Algorithm::NM, Task::State, 1);
  nm.p_num = 3;
  CHECK_NOTHROW(state_opt(xx, nm));
}

TEST_CASE("state optimization beats the coherent state on LMG") {
  const Preset p = preset_lmg(4, 10.0, 200);
  StateProblem prob;
  prob.model.dynamics = p.spec;
  const double coherent = qfim(lindblad_final(p.spec, p.rho0)).scalar();
  AlgoParams ad = quick(Algorithm::AD, Task::State, 300);
  ad.adam = true;
  const auto r = state_opt(prob, ad);
  CHECK(r.run.best_value >= coherent);
  CHECK(std::abs(r.psi.norm() - 1.0) < 1e-12);
  const auto nm = state_opt(prob, quick(Algorithm::NM, Task::State, 300));
  CHECK(nm.run.best_value >= coherent);
}

TEST_CASE("gram-schmidt yields orthonormal projectors") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    MeasurementProblem mp;
    const int d = 2 + static_cast<int>(s % 4);
    mp.state = random_ds(d, 1, s);
    const Codec c = measurement_codec(mp);
    std::mt19937_64 rng(s);
    const Povm M = decode_measurement(mp, c.random(rng));
    CHECK_NOTHROW(check_povm(M));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        if (i != j) CHECK((M.ops[i] * M.ops[j]).cwiseAbs().maxCoeff() <= 1e-8);
  }
  const Mat q = gram_schmidt(Mat::Ones(3, 3));
  CHECK((q.adjoint() * q - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rotation by zero keeps the input measurement") {
  MeasurementProblem mp;
  mp.type = MeasurementType::Rotation;
  mp.state = random_ds(3, 2, 9);
  mp.input = sic_povm(3);
  const Povm M = decode_measurement(mp, RVec::Zero(8));
  for (std::size_t i = 0; i < M.size(); ++i) CHECK((M.ops[i] - mp.input.ops[i]).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(cfim(mp.state, M).entries.isApprox(cfim(mp.state, mp.input).entries, 1e-13));
}

TEST_CASE("LC codec keeps a valid measurement") {
  MeasurementProblem mp;
  mp.type = MeasurementType::LinearCombination;
  mp.state = random_ds(3, 1, 4);
  mp.input = sic_povm(3);
  mp.m = 4;
  const Codec c = measurement_codec(mp);
  std::mt19937_64 rng(3);
  RVec x = c.random(rng) * 3.0 - RVec::Ones(static_cast<Eigen::Index>(c.dim));
  c.project(x);
  CHECK(x.minCoeff() >= 0.0);
  CHECK(x.maxCoeff() <= 1.0);
  CHECK_NOTHROW(check_povm(decode_measurement(mp, x)));
  mp.m = 10;
  CHECK_THROWS_AS(measurement_codec(mp), Error);
  mp.m = 4;
  mp.input = {};
  CHECK_THROWS_AS(measurement_codec(mp), Error);
}

TEST_CASE("measurement gradients match finite differences") {
  for (int n : {1, 2}) {
    MeasurementProblem lc;
    lc.type = MeasurementType::LinearCombination;
    lc.state = random_ds(3, n, 20 + n);
    lc.input = sic_povm(3);
    lc.m = 3;
    std::mt19937_64 rng(5);
    RVec x = measurement_codec(lc).random(rng);
    measurement_codec(lc).project(x);
    RVec g;
    const double v = measurement_gradient(lc, x, g);
    CHECK(v == doctest::Approx(cfim_objective(lc.state, decode_measurement(lc, x))));
    const RVec fd = fd_gradient([&](const RVec& y) { return cfim_objective(lc.state, decode_measurement(lc, y)); }, x);
    CHECK((g - fd).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));

    MeasurementProblem rot = lc;
    rot.type = MeasurementType::Rotation;
    RVec s = measurement_codec(rot).random(rng);
    measurement_gradient(rot, s, g);
    const RVec fs = fd_gradient([&](const RVec& y) { return cfim_objective(rot.state, decode_measurement(rot, y)); }, s);
    CHECK((g - fs).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, fs.cwiseAbs().maxCoeff()));
  }
  MeasurementProblem pr;
  pr.state = random_ds(2, 1, 3);
  RVec g;
  CHECK_THROWS_AS(measurement_gradient(pr, RVec::Ones(8), g), Error);
  CHECK_THROWS_AS(measurement_opt(pr, quick(Algorithm::AD, Task::Measurement, 1)), Error);
  CHECK_THROWS_AS(measurement_opt(pr, quick(Algorithm::NM, Task::Measurement, 1)), Error);
}

TEST_CASE("optimal projective measurement attains the QFI on a qubit") {
  for (double T : {2.0, 8.0}) {
    const Preset p = preset_me_spon(T, 100);
    MeasurementProblem mp;
    mp.state = lindblad_final(p.spec, p.rho0);
    const auto r = measurement_opt(mp, quick(Algorithm::DE, Task::Measurement, 200));
    CHECK(r.run.best_value >= 0.99 * qfim(mp.state).scalar());
  }
}

// Hard assignments of the input outcomes to m groups; the best one bounds the LC search from below.
double best_grouping(const DerivedState& ds, const Povm& input, std::size_t m, const RMat& W) {
  const std::size_t n = input.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= m;
  double best = 0.0;
  for (std::size_t code = 0; code < total; ++code) {
    Povm M;
    M.ops.assign(m, Mat::Zero(ds.dim(), ds.dim()));
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i, c /= m) M.ops[c % m] += input.ops[i];
    best = std::max(best, cfim_objective(ds, M, W));
  }
  return best;
}

Preset nv_lc_problem(MeasurementProblem& mp) {
  const Preset p = preset_nv_center(2.0, 100, false);
  mp.type = MeasurementType::LinearCombination;
  mp.state = lindblad_final(p.spec, p.rho0);
  mp.input = basis_povm(6);
  mp.m = 4;
  mp.W = p.W;
  return p;
}

TEST_CASE("LC search finds the best coarse graining on the NV model") {
  MeasurementProblem mp;
  nv_lc_problem(mp);
  const double exhaustive = best_grouping(mp.state, mp.input, mp.m, mp.W);
  const auto r = measurement_opt(mp, quick(Algorithm::DE, Task::Measurement, 300));
  CHECK(r.run.best_value >= exhaustive * (1.0 - 1e-6));
  MeasurementProblem rot = mp;
  rot.type = MeasurementType::Rotation;
  const double input = cfim_objective(mp.state, mp.input, mp.W);
  const auto rr = measurement_opt(rot, quick(Algorithm::DE, Task::Measurement, 40));
  CHECK(rr.run.best_value >= input * 0.999);
}

// Recorded mismatch: on this preset no 4-outcome grouping comes within 5% of the
// 6-outcome input (the exhaustive optimum is 1.17x at T = 2), see the decisions ledger.
TEST_CASE("LC measurement approaches the input measurement on the NV model" * doctest::may_fail()) {
  MeasurementProblem mp;
  nv_lc_problem(mp);
  const double input = cfim_objective(mp.state, mp.input, mp.W);
  REQUIRE(input > 0.0);
  const auto r = measurement_opt(mp, quick(Algorithm::DE, Task::Measurement, 300));
  CHECK(1.0 / r.run.best_value <= 1.05 / input);
}

TEST_CASE("comprehensive SM reaches the state-optimal value on a qubit") {
  const Preset p = preset_me_spon(5.0, 100, 0.1, 0.0);
  ComprehensiveProblem prob;
  prob.kind = CompKind::SM;
  prob.model.dynamics = p.spec;
  const auto r = comprehensive_opt(prob, quick(Algorithm::DE, Task::Comprehensive, 300));
  const double qfi = qfim(lindblad_final(p.spec, p.rho0)).scalar();
  CHECK(r.run.best_value >= 0.98 * qfi);
  CHECK(r.M.size() == 2);
  CHECK(std::abs(r.psi.norm() - 1.0) < 1e-12);
  CHECK(cfim_objective(lindblad_final(p.spec, ket_projector(r.psi)), r.M) ==
        doctest::Approx(r.run.best_value).epsilon(1e-10));
}

TEST_CASE("SM with the measurement pinned reduces to state optimization") {
  StateProblem sp;
  sp.model.kraus = unitary_phase(2.0);
  sp.obj.kind = ObjectiveKind::CFIM;
  sp.obj.M.ops = {ket_projector(plus_state()), Mat::Identity(2, 2) - ket_projector(plus_state())};
  const double state_only = state_opt(sp, quick(Algorithm::NM, Task::State, 300)).run.best_value;
  ComprehensiveProblem cp;
  cp.kind = CompKind::SM;
  cp.model.kraus = sp.model.kraus;
  const auto joint = comprehensive_opt(cp, quick(Algorithm::DE, Task::Comprehensive, 300));
  CHECK(state_only == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(joint.run.best_value == doctest::Approx(state_only).epsilon(1e-2));
}

TEST_CASE("comprehensive SC, CM and SCM") {
  const Preset p = preset_me_spon(3.0, 60, 0.0, 0.1, true);
  ComprehensiveProblem prob;
  prob.model.dynamics = p.spec;
  prob.Nc = 6;
  prob.psi0 = {plus_state()};
  const double base = uncontrolled(p);
  prob.kind = CompKind::SC;
  AlgoParams ad = quick(Algorithm::AD, Task::Comprehensive, 60);
  ad.adam = true;
  const auto sc = comprehensive_opt(prob, ad);
  CHECK(sc.run.values.front() == doctest::Approx(base).epsilon(1e-10));
  CHECK(sc.run.best_value > base);
  CHECK(sc.ctrl.size() == 3);
  CHECK(sc.M.ops.empty());
  const auto sc_de = comprehensive_opt(prob, quick(Algorithm::DE, Task::Comprehensive, 20));
  CHECK(sc_de.run.best_value >= base - 1e-12);
  prob.kind = CompKind::CM;
  CHECK_THROWS_AS(comprehensive_opt(prob, quick(Algorithm::DE, Task::Comprehensive, 2)), Error);
  prob.rho0 = p.rho0;
  const auto cm = comprehensive_opt(prob, quick(Algorithm::DE, Task::Comprehensive, 20));
  CHECK(cm.psi.size() == 0);
  CHECK(cm.M.size() == 2);
  CHECK(cm.run.best_value <= qfim(lindblad_final(cm.spec, p.rho0)).scalar() + 1e-9);
  prob.kind = CompKind::SCM;
  const auto scm = comprehensive_opt(prob, quick(Algorithm::PSO, Task::Comprehensive, 20));
  CHECK(scm.psi.size() == 2);
  CHECK(scm.run.best_value == doctest::Approx(cfim_objective(lindblad_final(scm.spec, ket_projector(scm.psi)), scm.M))
                                  .epsilon(1e-10));
  CHECK_THROWS_AS(comprehensive_opt(prob, quick(Algorithm::AD, Task::Comprehensive, 2)), Error);
  ComprehensiveProblem kr;
  kr.model.kraus = unitary_phase(1.0);
  kr.kind = CompKind::SC;
  CHECK_THROWS_AS(comprehensive_opt(kr, quick(Algorithm::DE, Task::Comprehensive, 2)), Error);
}

TEST_CASE("minimum time search") {
  const Preset p = preset_me_spon(2.0, 8, 0.0, 0.1, true);
  ControlProblem prob{p.spec, p.rho0, {}, Bound{-0.5, 0.5}, 0};
  const AlgoParams ap = quick(Algorithm::AutoGRAPE, Task::Control, 15);
  DynamicsSpec first = p.spec;
  first.tspan.resize(2);
  first.Hc.clear();
  first.ctrl.clear();
  const double f1 = objective_value(lindblad_final(first, p.rho0), {});
  for (SearchMode m : {SearchMode::Binary, SearchMode::Forward}) {
    const auto r = mintime(prob, f1, m, ap);
    CHECK(r.steps == 1);
    CHECK(r.t == doctest::Approx(p.spec.tspan[1]));
    CHECK(r.ctrl.front().size() == 1);
  }
  const double mid = 0.5 * (f1 + control_opt(prob, ap).run.best_value);
  const auto b = mintime(prob, mid, SearchMode::Binary, ap);
  const auto f = mintime(prob, mid, SearchMode::Forward, ap);
  CHECK(b.steps == f.steps);
  CHECK(b.value >= mid);
  CHECK_THROWS_AS(mintime(prob, 1e6, SearchMode::Binary, ap), Error);
  try {
    mintime(prob, 1e6, SearchMode::Forward, ap);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
  }
  prob.Nc = 2;
  CHECK_THROWS_AS(mintime(prob, f1, SearchMode::Binary, ap), Error);
}
