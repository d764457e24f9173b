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
#include "qmetro/bayes.hpp"

using namespace qmetro;

namespace {

// rho(x) = |psi(x)><psi(x)| with psi = (1, e^{ix})/sqrt2; CFI in the +/- basis and QFI are both 1.
PriorGrid phase_grid(double lo, double hi, std::size_t n) {
  PriorGrid g;
  g.axes = {linspace(lo, hi, n)};
  for (double x : g.axes[0]) {
    const std::complex<double> e = std::exp(kI * x);
    DerivedState ds;
    ds.rho = Mat(2, 2);
    ds.rho << 0.5, 0.5 * std::conj(e), 0.5 * e, 0.5;
    Mat d(2, 2);
    d << 0.0, -0.5 * kI * std::conj(e), 0.5 * kI * e, 0.0;
    ds.drho = {d};
    g.states.push_back(ds);
  }
  set_uniform_prior(g);
  return g;
}

PriorGrid constant_grid(const std::vector<std::vector<double>>& axes) {
  PriorGrid g;
  g.axes = axes;
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  DerivedState ds;
  ds.rho = Mat::Identity(2, 2) * 0.5;
  ds.rho(0, 0) = 0.7;
  ds.rho(1, 1) = 0.3;
  ds.drho.assign(axes.size(), Mat::Zero(2, 2));
  g.states.assign(n, ds);
  set_uniform_prior(g);
  return g;
}

PriorGrid fig5_grid(std::size_t n, double eta) {
  PriorGrid g = bayes_demo_grid(-M_PI / 2.0, M_PI / 2.0, n);
  set_gaussian_prior(g, 0.0, eta);
  return g;
}

}  // namespace

TEST_CASE("trapezoid weights") {
  CHECK(trapezoid_weights({2.0})(0) == 1.0);
  const RVec w = trapezoid_weights({0.0, 1.0, 3.0});
  CHECK(w(0) == doctest::Approx(0.5));
  CHECK(w(1) == doctest::Approx(1.5));
  CHECK(w(2) == doctest::Approx(1.0));
  CHECK_THROWS_AS(trapezoid_weights({0.0, 0.0}), Error);
  const RVec w2 = grid_weights({{0.0, 1.0}, {0.0, 2.0}});
  CHECK(w2.size() == 4);
  CHECK(w2.sum() == doctest::Approx(2.0));
}

TEST_CASE("posterior unchanged by flat likelihood") {
  PriorGrid g = constant_grid({linspace(-1.0, 1.0, 41)});
  set_gaussian_prior(g, 0.2, 0.3);
  const auto r = bayes_update(g, plus_minus_povm(), {0, 1, 1, 0, 0}, Estimator::Mean, true);
  REQUIRE(r.history.size() == 5);
  for (const auto& h : r.history) CHECK((h - g.p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bayes update converges on the rotation template") {
  const PriorGrid g = bayes_demo_grid(0.0, M_PI / 2.0, 1000);
  const Povm M = plus_minus_povm();
  // true state at pi/4 evaluated from the same template
  const PriorGrid truth = bayes_demo_grid(M_PI / 4.0, M_PI / 4.0 + 1.0, 2);
  const auto y = simulate_outcomes(truth.states[0].rho, M, 500, 7);
  const auto r = bayes_update(g, M, y, Estimator::MAP, true);
  const RVec w = grid_weights(g.axes);
  for (const auto& h : r.history) CHECK(std::abs(w.dot(h) - 1.0) <= 1e-8);
  CHECK(std::abs(r.estimates.back()[0] - M_PI / 4.0) < 0.05);
  const auto rm = bayes_update(g, M, y, Estimator::Mean);
  CHECK(std::abs(rm.estimates.back()[0] - M_PI / 4.0) < 0.05);
  const auto l = mle(g, M, y);
  CHECK(std::abs(l.estimates.back()[0] - M_PI / 4.0) < 0.05);
  CHECK(l.posterior.maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("delta prior keeps its estimate") {
  PriorGrid g = bayes_demo_grid(0.0, 1.0, 11);
  g.p.setZero();
  g.p(4) = 1.0;
  normalize_prior(g);
  const auto r = bayes_update(g, plus_minus_povm(), {0, 1, 0, 0}, Estimator::MAP);
  for (const auto& e : r.estimates) CHECK(e[0] == doctest::Approx(0.4));
  const auto rm = bayes_update(g, plus_minus_povm(), {0, 1, 0, 0}, Estimator::Mean);
  for (const auto& e : rm.estimates) CHECK(e[0] == doctest::Approx(0.4));
}

TEST_CASE("degenerate posterior and bad outcomes") {
  PriorGrid g = phase_grid(0.0, 0.0 + 1e-9, 2);
  // at x = 0 the minus outcome has zero probability
  g.p << 1.0, 0.0;
  normalize_prior(g);
  CHECK_THROWS_AS(bayes_update(g, plus_minus_povm(), {1}), Error);
  try {
    bayes_update(g, plus_minus_povm(), {1});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degeneracy);
  }
  CHECK_THROWS_AS(bayes_update(g, plus_minus_povm(), {2}), Error);
}

TEST_CASE("mle argmax invariant under repetition") {
  const PriorGrid g = phase_grid(0.1, 3.0, 60);
  const auto one = mle(g, plus_minus_povm(), {1});
  const auto many = mle(g, plus_minus_povm(), std::vector<int>(40, 1));
  CHECK(one.estimates.back()[0] == many.estimates.back()[0]);
  // p(-|x) = (1 - cos x)/2 peaks at the upper end of the grid
  CHECK(one.estimates.back()[0] == doctest::Approx(3.0));
  // log-space accumulation survives products far below double range
  const auto huge = mle(g, plus_minus_povm(), std::vector<int>(5000, 0));
  CHECK(huge.posterior.allFinite());
}

TEST_CASE("bayes cost") {
  PriorGrid g = constant_grid({linspace(-1.0, 1.0, 201)});
  set_gaussian_prior(g, 0.1, 0.25);
  const RVec w = grid_weights(g.axes);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) mean += w(i) * g.p(i) * g.axes[0][i];
  for (std::size_t i = 0; i < g.size(); ++i) var += w(i) * g.p(i) * std::pow(g.axes[0][i] - mean, 2);
  const double c = bayes_cost(g, {{mean}, {mean}}, plus_minus_povm(), RMat::Identity(1, 1) * 5.0);
  CHECK(c == doctest::Approx(var).epsilon(1e-12));

  PriorGrid g2 = constant_grid({linspace(-1.0, 1.0, 11), linspace(0.0, 2.0, 7)});
  const std::vector<std::vector<double>> est = {{0.0, 1.0}, {0.1, 0.9}};
  RMat W(2, 2);
  W << 2.0, 0.3, 0.3, 1.0;
  CHECK(bayes_cost(g2, est, plus_minus_povm(), RMat::Zero(2, 2)) == 0.0);
  const double c1 = bayes_cost(g2, est, plus_minus_povm(), W);
  CHECK(bayes_cost(g2, est, plus_minus_povm(), 3.0 * W) == doctest::Approx(3.0 * c1));
  CHECK_THROWS_AS(bayes_cost(g2, {{0.0, 1.0}}, plus_minus_povm(), W), Error);
}

TEST_CASE("bayesian cost bound") {
  // constant state with zero-mean prior: bound equals prior variance
  PriorGrid g = constant_grid({linspace(-1.0, 1.0, 201)});
  set_gaussian_prior(g, 0.0, 0.3);
  const RVec w = grid_weights(g.axes);
  double var = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) var += w(i) * g.p(i) * g.axes[0][i] * g.axes[0][i];
  CHECK(bcb(g, RMat::Identity(1, 1)) == doctest::Approx(var).epsilon(1e-10));
  CHECK(bcb(g, 2.0 * RMat::Identity(1, 1)) == doctest::Approx(2.0 * var).epsilon(1e-10));

  // any estimator built from a projective measurement costs at least the bound
  const PriorGrid d = bayes_demo_grid(0.0, M_PI / 2.0, 400);
  const Povm M = plus_minus_povm();
  const auto lik = likelihood_table(d, M);
  const RVec wd = grid_weights(d.axes);
  std::vector<std::vector<double>> est;
  for (std::size_t y = 0; y < 2; ++y) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      num += wd(i) * d.p(i) * lik[y](i) * d.axes[0][i];
      den += wd(i) * d.p(i) * lik[y](i);
    }
    est.push_back({num / den});
  }
  const double bound = bcb(d, RMat::Identity(1, 1));
  const double cost = bayes_cost(d, est, M, RMat::Identity(1, 1));
  CHECK(bound > 0.0);
  CHECK(bound <= cost + 1e-12);
}

TEST_CASE("bayesian cramer-rao family on constant information") {
  const PriorGrid g = phase_grid(0.3, 1.2, 50);
  const Povm M = plus_minus_povm();
  for (int t : {1, 2, 3}) {
    CHECK(bcrb(g, M, {}, t).scalar() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(bqcrb(g, {}, t).scalar() == doctest::Approx(1.0).epsilon(1e-9));
  }
  BiasSpec b;
  b.b.assign(g.size(), RVec::Zero(1));
  b.db.assign(g.size(), RVec::Constant(1, -1.0));
  CHECK(std::abs(bcrb(g, M, b, 1).scalar()) < 1e-14);
  CHECK_THROWS_AS(bcrb(g, M, {}, 4), Error);
  PriorGrid nodp = g;
  nodp.dp.clear();
  CHECK_THROWS_AS(bcrb(nodp, M, {}, 3), Error);
  CHECK_NOTHROW(bcrb(nodp, M, {}, 1));
}

TEST_CASE("type 1 equals type 3 for uniform prior and zero bias") {
  const PriorGrid g = bayes_demo_grid(-1.0, 1.0, 101);
  const RMat t1 = bcrb(g, {}, {}, 1).value;
  const RMat t3 = bcrb(g, {}, {}, 3).value;
  CHECK(std::abs(t1(0, 0) - t3(0, 0)) <= 1e-10);
  CHECK(std::abs(bqcrb(g, {}, 1).scalar() - bqcrb(g, {}, 3).scalar()) <= 1e-10);
}

TEST_CASE("singular information is pseudo-inverted and flagged") {
  const PriorGrid g = constant_grid({linspace(-1.0, 1.0, 21)});
  const auto r = bqcrb(g, {}, 1);
  CHECK(r.pseudo_inverse);
  CHECK(r.scalar() == 0.0);
  CHECK(vtb(g, plus_minus_povm()).pseudo_inverse);
  PriorGrid gauss = g;
  set_gaussian_prior(gauss, 0.0, 0.5);
  CHECK_FALSE(vtb(gauss, plus_minus_povm()).pseudo_inverse);
}

TEST_CASE("van trees bounds") {
  // x-independent state: VTB is the inverse prior information, 1/eta^2 for a wide Gaussian
  PriorGrid g = constant_grid({linspace(-M_PI / 2.0, M_PI / 2.0, 2001)});
  set_gaussian_prior(g, 0.0, 0.2);
  CHECK(vtb(g, plus_minus_povm()).scalar() == doctest::Approx(0.04).epsilon(1e-4));
  CHECK(qvtb(g).scalar() == doctest::Approx(0.04).epsilon(1e-4));
  const PriorGrid f = fig5_grid(401, 0.3);
  CHECK(qvtb(f).scalar() > 0.0);
}

TEST_CASE("bound orderings on the Gaussian-prior rotation template") {
  const PriorGrid g = fig5_grid(1001, 0.1);
  const double c1 = bcrb(g, {}, {}, 1).scalar();
  const double c2 = bcrb(g, {}, {}, 2).scalar();
  const double q1 = bqcrb(g, {}, 1).scalar();
  const double q2 = bqcrb(g, {}, 2).scalar();
  const double qv = qvtb(g).scalar();
  CHECK(c1 >= c2);
  CHECK(q1 >= q2);
  CHECK(q1 >= qv);
  CHECK(c1 >= bcrb(g, {}, {}, 3).scalar());
  CHECK(c2 >= vtb(g, {}).scalar());
  CHECK(q1 >= bqcrb(g, {}, 3).scalar());
  const PriorGrid g2 = fig5_grid(1001, 0.2);
  CHECK(qzzb(g2) <= qvtb(g2).scalar());
  CHECK(qzzb(g2) > 0.0);
  // wide prior: type 2 and VTB coincide
  const PriorGrid wide = fig5_grid(1001, 3.0);
  const double w2 = bcrb(wide, {}, {}, 2).scalar();
  const double wv = vtb(wide, {}).scalar();
  CHECK(std::abs(w2 - wv) / w2 < 0.02);
  const double w1 = bcrb(wide, {}, {}, 1).scalar();
  const double w3 = bcrb(wide, {}, {}, 3).scalar();
  CHECK(std::abs(w1 - w3) / w1 < 0.02);
}

TEST_CASE("quantum ziv-zakai") {
  const PriorGrid g = constant_grid({linspace(0.0, 1.0, 1000)});
  CHECK(std::abs(qzzb(g) - 1.0 / 12.0) < 1e-3);
  const PriorGrid shifted = constant_grid({linspace(5.0, 6.0, 1000)});
  CHECK(qzzb(shifted) == doctest::Approx(qzzb(g)).epsilon(1e-9));
  PriorGrid delta = constant_grid({linspace(0.0, 1.0, 50)});
  delta.p.setZero();
  delta.p(20) = 1.0;
  CHECK(qzzb(delta) == 0.0);
  CHECK(qzzb(constant_grid({{0.3}})) == 0.0);
  CHECK_THROWS_AS(qzzb(constant_grid({{0.0, 0.1, 0.5}})), Error);
  CHECK_THROWS_AS(qzzb(constant_grid({linspace(0, 1, 3), linspace(0, 1, 3)})), Error);
  const PriorGrid f = fig5_grid(301, 0.4);
  CHECK(qzzb(f) >= 0.0);
}

TEST_CASE("averaged information matrices") {
  const PriorGrid g = phase_grid(0.3, 1.2, 30);
  CHECK(avg_cfim(g, plus_minus_povm())(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(avg_qfim(g)(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  // two-point uniform prior: plain average
  PriorGrid two = bayes_demo_grid(0.2, 0.9, 2);
  const double a = qfim(two.states[0]).scalar(), b = qfim(two.states[1]).scalar();
  CHECK(avg_qfim(two)(0, 0) == doctest::Approx(0.5 * (a + b)));
  // refinement oracle
  const double coarse = avg_cfim(fig5_grid(201, 0.3), {})(0, 0);
  const double fine = avg_cfim(fig5_grid(2001, 0.3), {})(0, 0);
  CHECK(std::abs(coarse - fine) < 1e-4);
}

TEST_CASE("grid refinement of bounds") {
  for (double eta : {0.2, 0.5}) {
    const PriorGrid a = fig5_grid(501, eta), b = fig5_grid(1001, eta);
    CHECK(std::abs(bqcrb(a, {}, 1).scalar() - bqcrb(b, {}, 1).scalar()) <= 1e-3);
    CHECK(std::abs(bcrb(a, {}, {}, 2).scalar() - bcrb(b, {}, {}, 2).scalar()) <= 1e-3);
    CHECK(std::abs(qvtb(a).scalar() - qvtb(b).scalar()) <= 1e-3);
    CHECK(std::abs(bcb(a, RMat::Identity(1, 1)) - bcb(b, RMat::Identity(1, 1))) <= 1e-3);
  }
}

TEST_CASE("outcome simulation is seeded") {
  const PriorGrid g = bayes_demo_grid(0.5, 0.6, 2);
  const auto a = simulate_outcomes(g.states[0].rho, plus_minus_povm(), 2000, 3);
  const auto b = simulate_outcomes(g.states[0].rho, plus_minus_povm(), 2000, 3);
  CHECK(a == b);
  double plus = 0.0;
  for (int v : a) plus += v == 0;
  const double p = (g.states[0].rho * plus_minus_povm().ops[0]).trace().real();
  CHECK(std::abs(plus / 2000.0 - p) < 0.04);
}
