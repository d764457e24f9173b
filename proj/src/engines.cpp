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

#include "qmetro/engines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace qmetro {

ObjectiveKind parse_objective_kind(const std::string& s) {
  if (s == "QFIM" || s == "QFI") return ObjectiveKind::QFIM;
  if (s == "CFIM" || s == "CFI") return ObjectiveKind::CFIM;
  if (s == "HCRB") return ObjectiveKind::HCRB;
  fail(ErrorKind::Config, "unknown objective '" + s + "' (expected QFIM, CFIM or HCRB)");
}

const char* to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::QFIM: return "QFIM";
    case ObjectiveKind::CFIM: return "CFIM";
    case ObjectiveKind::HCRB: return "HCRB";
  }
  return "?";
}

RMat weight_or_identity(const RMat& W, Eigen::Index n) {
  if (W.size() == 0) return RMat::Identity(n, n);
  check_weight(W, n);
  return W;
}

RMat scalarization_weights(const RMat& F, const RMat& W, double* value) {
  const auto n = F.rows();
  if (n == 1) {
    if (value) *value = F(0, 0);
    return RMat::Ones(1, 1);
  }
  Eigen::FullPivLU<RMat> lu(F);
  if (!lu.isInvertible()) {
    if (value) *value = 0.0;
    return RMat::Zero(n, n);
  }
  const RMat finv = lu.inverse();
  const RMat ws = 0.5 * (W + W.transpose());
  const double t = (ws * finv).trace();
  if (!(t > 0.0) || !std::isfinite(t)) {
    if (value) *value = 0.0;
    return RMat::Zero(n, n);
  }
  if (value) *value = 1.0 / t;
  RMat c = finv * ws * finv / (t * t);
  return 0.5 * (c + c.transpose());
}

double objective_value(const DerivedState& ds, const ObjectiveSpec& obj, double eps) {
  const auto n = static_cast<Eigen::Index>(ds.nparams());
  if (n == 0) fail(ErrorKind::Dimension, "objective needs at least one parameter derivative");
  const RMat W = weight_or_identity(obj.W, n);
  RMat F;
  switch (obj.kind) {
    case ObjectiveKind::QFIM: F = qfim(ds, obj.ld, eps).entries; break;
    case ObjectiveKind::CFIM: F = cfim(ds, obj.M, eps).entries; break;
    case ObjectiveKind::HCRB: {
      if (n < 2) fail(ErrorKind::Config, "HCRB objective needs at least two parameters; use QFIM instead");
      const double h = hcrb(ds, W, eps);
      return h > 0.0 && std::isfinite(h) ? 1.0 / h : 0.0;
    }
  }
  double v = 0.0;
  scalarization_weights(F, W, &v);
  return v;
}

namespace {

ObjectiveGradient qfim_gradient(const DerivedState& ds, const RMat& W, double eps) {
  const auto L = sld(ds, false, eps).ops;
  const auto n = static_cast<Eigen::Index>(L.size());
  RMat F(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b) F(a, b) = F(b, a) = (ds.rho * L[a] * L[b]).trace().real();
  ObjectiveGradient g;
  const RMat C = scalarization_weights(F, W, &g.value);
  const auto d = ds.dim();
  g.d_rho = Mat::Zero(d, d);
  g.d_drho.assign(n, Mat::Zero(d, d));
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      if (C(a, b) == 0.0) continue;
      g.d_drho[a] += 2.0 * C(a, b) * L[b];
      g.d_rho -= 0.5 * C(a, b) * (L[a] * L[b] + L[b] * L[a]);
    }
  return g;
}

ObjectiveGradient cfim_gradient(const DerivedState& ds, const Povm& M, const RMat& W, double eps) {
  const Povm& m = M.ops.empty() ? default_povm(static_cast<int>(ds.dim())) : M;
  if (m.dim() != ds.dim()) fail(ErrorKind::Dimension, "POVM dimension does not match rho");
  const auto n = static_cast<Eigen::Index>(ds.nparams());
  RVec p(m.size());
  std::vector<RVec> dp(m.size(), RVec(n));
  RMat I = RMat::Zero(n, n);
  for (std::size_t y = 0; y < m.size(); ++y) {
    p(y) = (ds.rho * m.ops[y]).trace().real();
    for (Eigen::Index a = 0; a < n; ++a) dp[y](a) = (ds.drho[a] * m.ops[y]).trace().real();
    if (p(y) >= eps) I += dp[y] * dp[y].transpose() / p(y);
  }
  ObjectiveGradient g;
  const RMat C = scalarization_weights(I, W, &g.value);
  const auto d = ds.dim();
  g.d_rho = Mat::Zero(d, d);
  g.d_drho.assign(n, Mat::Zero(d, d));
  for (std::size_t y = 0; y < m.size(); ++y) {
    if (p(y) < eps) continue;
    const RVec s = 2.0 * C * dp[y] / p(y);
    for (Eigen::Index a = 0; a < n; ++a) g.d_drho[a] += s(a) * m.ops[y];
    g.d_rho -= dp[y].dot(C * dp[y]) / (p(y) * p(y)) * m.ops[y];
  }
  return g;
}

}  // namespace

ObjectiveGradient objective_gradient(const DerivedState& ds, const ObjectiveSpec& obj, double eps) {
  const auto n = static_cast<Eigen::Index>(ds.nparams());
  const RMat W = weight_or_identity(obj.W, n);
  switch (obj.kind) {
    case ObjectiveKind::QFIM:
      if (obj.ld != LdType::SLD) fail(ErrorKind::Unsupported, "gradient objectives support the SLD QFIM only");
      return qfim_gradient(ds, W, eps);
    case ObjectiveKind::CFIM: return cfim_gradient(ds, obj.M, W, eps);
    case ObjectiveKind::HCRB: break;
  }
  fail(ErrorKind::Unsupported, "gradient engines are not available for the HCRB objective");
}

PullbackResult qfi_pullback(const DerivedState& ds, const RMat& C, double eps) {
  check_derived(ds);
  const auto n = static_cast<Eigen::Index>(ds.nparams());
  if (C.rows() != n || C.cols() != n) fail(ErrorKind::Dimension, "pullback weights must be n x n");
  const Spectrum sp = eigh(ds.rho);
  std::vector<Mat> L;
  for (const auto& dr : ds.drho) {
    Mat l = sylvester_symmetric(sp, 2.0 * dr, eps);
    L.push_back((l + l.adjoint()) / 2.0);
  }
  const auto d = ds.dim();
  PullbackResult r;
  r.dF_drho = Mat::Zero(d, d);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      if (C(a, b) != 0.0) r.dF_drho += 0.5 * C(a, b) * (L[a] * L[b] + L[b] * L[a]);
  for (Eigen::Index c = 0; c < n; ++c) {
    Mat gamma = Mat::Zero(d, d);
    for (Eigen::Index b = 0; b < n; ++b)
      if (C(c, b) != 0.0) gamma += C(c, b) * (ds.rho * L[b] + L[b] * ds.rho);
    Mat h = sylvester_symmetric(sp, gamma, eps);
    h = (h + h.adjoint()) / 2.0;
    r.dF_ddrho.push_back(2.0 * h);
    r.dF_drho -= L[c] * h + h * L[c];
    r.h.push_back(std::move(h));
  }
  return r;
}

ObjectiveGradient objective_gradient_pullback(const DerivedState& ds, const ObjectiveSpec& obj, double eps) {
  if (obj.kind != ObjectiveKind::QFIM || obj.ld != LdType::SLD)
    fail(ErrorKind::Unsupported, "the pullback route covers the SLD QFIM objective");
  const auto n = static_cast<Eigen::Index>(ds.nparams());
  const RMat W = weight_or_identity(obj.W, n);
  const RMat F = qfim(ds, LdType::SLD, eps).entries;
  ObjectiveGradient g;
  const RMat C = scalarization_weights(F, W, &g.value);
  const PullbackResult pb = qfi_pullback(ds, C, eps);
  g.d_rho = pb.dF_drho;
  g.d_drho = pb.dF_ddrho;
  return g;
}

DynamicsGradient dynamics_gradient(const DynamicsSpec& raw, const Mat& rho0, const ObjectiveSpec& obj,
                                   GradientRoute route, bool want_ctrl, double eps) {
  if (obj.kind == ObjectiveKind::HCRB)
    fail(ErrorKind::Unsupported, "gradient engines are not available for the HCRB objective");
  const DynamicsSpec spec = normalize_spec(raw);
  check_state(rho0, "rho0");
  if (rho0.rows() != spec.dim()) fail(ErrorKind::Dimension, "rho0 dimension does not match the Hamiltonian");
  const Superops so = build_superops(spec);
  const auto u = step_controls(spec);
  const std::size_t N = spec.steps(), P = spec.dH.size(), K = spec.Hc.size();
  const auto d = spec.dim();

  auto generator = [&](std::size_t j) {
    Mat gen = so.free(j);
    for (std::size_t k = 0; k < K; ++k)
      if (u[k][j - 1] != 0.0) gen += u[k][j - 1] * so.Lc[k];
    return gen;
  };
  auto same_step = [&](std::size_t i, std::size_t j) {
    if (so.L0.size() != 1) return false;
    if (spec.tspan[i] - spec.tspan[i - 1] != spec.tspan[j] - spec.tspan[j - 1]) return false;
    for (std::size_t k = 0; k < K; ++k)
      if (u[k][i - 1] != u[k][j - 1]) return false;
    return true;
  };

  std::vector<Vec> r(N + 1);
  std::vector<std::vector<Vec>> dr(N + 1, std::vector<Vec>(P));
  r[0] = vec(rho0);
  for (auto& v : dr[0]) v = Vec::Zero(d * d);
  Mat e;
  std::size_t cached = 0;
  for (std::size_t j = 1; j <= N; ++j) {
    const double dt = spec.tspan[j] - spec.tspan[j - 1];
    if (cached == 0 || !same_step(cached, j)) {
      e = expm(dt * generator(j));
      cached = j;
    }
    r[j] = e * r[j - 1];
    for (std::size_t a = 0; a < P; ++a) dr[j][a] = dt * (so.A[a] * r[j]) + e * dr[j - 1][a];
  }

  DynamicsGradient out;
  out.final_state.rho = unvec(r[N], d);
  out.final_state.rho = (out.final_state.rho + out.final_state.rho.adjoint()) / 2.0;
  for (std::size_t a = 0; a < P; ++a) {
    Mat m = unvec(dr[N][a], d);
    out.final_state.drho.push_back((m + m.adjoint()) / 2.0);
  }
  const ObjectiveGradient og = route == GradientRoute::Pullback
                                   ? objective_gradient_pullback(out.final_state, obj, eps)
                                   : objective_gradient(out.final_state, obj, eps);
  out.value = og.value;
  out.ctrl.resize(K);
  for (std::size_t k = 0; k < K; ++k) out.ctrl[k].assign(spec.ctrl[k].size(), 0.0);

  std::vector<Mat> a_adj;
  for (const auto& a : so.A) a_adj.push_back(a.adjoint());
  Vec lam = vec(og.d_rho);
  std::vector<Vec> mu(P);
  for (std::size_t a = 0; a < P; ++a) mu[a] = vec(og.d_drho[a]);

  const bool ctrl_pass = want_ctrl && K > 0;
  Mat eadj;
  std::size_t eadj_step = 0;
  for (std::size_t t = N; t >= 1; --t) {
    const double dt = spec.tspan[t] - spec.tspan[t - 1];
    Vec lt = lam;
    for (std::size_t a = 0; a < P; ++a) lt += dt * (a_adj[a] * mu[a]);
    if (ctrl_pass) {
      Mat m = lt * r[t - 1].adjoint();
      for (std::size_t a = 0; a < P; ++a) m += mu[a] * dr[t - 1][a].adjoint();
      auto [ea, lf] = expm_frechet(Mat((dt * generator(t)).adjoint()), m);
      eadj = std::move(ea);
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t hold = N / spec.ctrl[k].size();
        out.ctrl[k][(t - 1) / hold] += dt * (lf.conjugate().cwiseProduct(so.Lc[k])).sum().real();
      }
    } else if (eadj_step == 0 || !same_step(eadj_step, t)) {
      eadj = expm(dt * generator(t)).adjoint();
      eadj_step = t;
    }
    lam = eadj * lt;
    for (std::size_t a = 0; a < P; ++a) mu[a] = eadj * mu[a];
  }
  out.rho0 = unvec(lam, d);
  return out;
}

std::vector<std::vector<double>> grape_gradient(const DynamicsSpec& spec, const Mat& rho0, const ObjectiveSpec& obj,
                                                GradientRoute route) {
  if (spec.Hc.empty()) return {};
  return dynamics_gradient(spec, rho0, obj, route, true).ctrl;
}

// ---- optimizers ----

Algorithm parse_algorithm(const std::string& s) {
  if (s == "auto-GRAPE" || s == "autoGRAPE") return Algorithm::AutoGRAPE;
  if (s == "GRAPE") return Algorithm::GRAPE;
  if (s == "AD") return Algorithm::AD;
  if (s == "PSO") return Algorithm::PSO;
  if (s == "DE") return Algorithm::DE;
  if (s == "NM") return Algorithm::NM;
  if (s == "RI") return Algorithm::RI;
  fail(ErrorKind::Config, "unknown algorithm '" + s + "'");
}

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::AutoGRAPE: return "auto-GRAPE";
    case Algorithm::GRAPE: return "GRAPE";
    case Algorithm::AD: return "AD";
    case Algorithm::PSO: return "PSO";
    case Algorithm::DE: return "DE";
    case Algorithm::NM: return "NM";
    case Algorithm::RI: return "RI";
  }
  return "?";
}

AlgoParams default_params(Algorithm a, Task t) {
  AlgoParams p;
  p.algo = a;
  switch (a) {
    case Algorithm::AutoGRAPE:
    case Algorithm::GRAPE: p.adam = true; p.max_episode = 300; break;
    case Algorithm::AD: p.adam = t == Task::Control; p.max_episode = 300; break;
    case Algorithm::PSO: p.max_episode = 1000; p.reset_period = 100; break;
    case Algorithm::DE: p.max_episode = 1000; break;
    case Algorithm::NM: p.max_episode = 1000; break;
    case Algorithm::RI: p.max_episode = 300; break;
  }
  return p;
}

void adam_step(RVec& params, const RVec& grads, AdamState& st, double epsilon, double beta1, double beta2) {
  if (grads.size() != params.size()) fail(ErrorKind::Dimension, "gradient and parameter sizes differ");
  if (st.m.size() != params.size()) {
    st.m = RVec::Zero(params.size());
    st.v = RVec::Zero(params.size());
    st.t = 0;
  }
  ++st.t;
  st.m = beta1 * st.m + (1.0 - beta1) * grads;
  st.v = beta2 * st.v + (1.0 - beta2) * grads.cwiseAbs2();
  const double b1 = 1.0 - std::pow(beta1, st.t);
  const double b2 = 1.0 - std::pow(beta2, st.t);
  params.array() += epsilon * (st.m.array() / b1) / ((st.v.array() / b2).sqrt() + 1e-8);
}

void ascent_step(RVec& params, const RVec& grads, AdamState& st, const AlgoParams& p) {
  if (p.adam) adam_step(params, grads, st, p.epsilon, p.beta1, p.beta2);
  else params += p.epsilon * grads;
}

std::mt19937_64 candidate_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

std::vector<RVec> initial_population(const Codec& codec, std::size_t n, const std::vector<RVec>& init,
                                     std::uint64_t seed) {
  std::vector<RVec> pop;
  for (std::size_t i = 0; i < n; ++i) {
    RVec x;
    if (i < init.size()) {
      x = init[i];
      if (static_cast<std::size_t>(x.size()) != codec.dim) fail(ErrorKind::Dimension, "initial guess has wrong size");
    } else {
      auto rng = candidate_rng(seed ^ 0x5bd1e995ULL, i);
      x = codec.random(rng);
    }
    if (codec.project) codec.project(x);
    pop.push_back(std::move(x));
  }
  return pop;
}

namespace {

std::vector<double> evaluate_all(const std::vector<RVec>& pop, const Evaluator& f, int threads) {
  std::vector<double> out(pop.size());
  const std::size_t nt = std::min<std::size_t>(std::max(threads, 1), pop.size());
  if (nt <= 1) {
    for (std::size_t i = 0; i < pop.size(); ++i) out[i] = f(pop[i]);
    return out;
  }
  std::vector<std::thread> ws;
  for (std::size_t w = 0; w < nt; ++w)
    ws.emplace_back([&, w] {
      for (std::size_t i = w; i < pop.size(); i += nt) out[i] = f(pop[i]);
    });
  for (auto& t : ws) t.join();
  return out;
}

std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t b = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[b]) b = i;
  return b;
}

void project(const Codec& c, RVec& x) {
  if (c.project) c.project(x);
}

}  // namespace

OptRun pso_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init,
               bool keep_history) {
  if (p.p_num < 2) fail(ErrorKind::Config, "PSO needs p_num >= 2");
  const std::size_t P = p.p_num;
  auto x = initial_population(codec, P, init, p.seed);
  std::vector<RVec> vel(P, RVec::Zero(codec.dim));
  std::vector<RVec> pb = x;
  std::vector<double> pbv(P, -std::numeric_limits<double>::infinity());
  std::vector<std::mt19937_64> rng;
  for (std::size_t i = 0; i < P; ++i) rng.push_back(candidate_rng(p.seed, i));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  OptRun run;
  run.keep_history = keep_history;
  for (int m = 1; m <= p.max_episode; ++m) {
    const auto fv = evaluate_all(x, f, p.threads);
    for (std::size_t i = 0; i < P; ++i)
      if (fv[i] > pbv[i]) {
        pbv[i] = fv[i];
        pb[i] = x[i];
      }
    const std::size_t g = argmax_first(pbv);
    const RVec gb = pb[g];
    run.values.push_back(pbv[g]);
    if (keep_history) run.history.push_back(gb);
    for (std::size_t i = 0; i < P; ++i) {
      const double r1 = unit(rng[i]), r2 = unit(rng[i]);
      vel[i] = p.c0 * vel[i] + r1 * p.c1 * (pb[i] - x[i]) + r2 * p.c2 * (gb - x[i]);
      x[i] += vel[i];
      project(codec, x[i]);
    }
    if (p.reset_period > 0 && m % p.reset_period == 0)
      for (auto& xi : x) xi = gb;
    run.best = gb;
    run.best_value = pbv[g];
    run.episodes = m;
  }
  return run;
}

OptRun de_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init,
              bool keep_history) {
  if (p.p_num < 4) fail(ErrorKind::Config, "DE needs p_num >= 4");
  const std::size_t P = p.p_num;
  auto pop = initial_population(codec, P, init, p.seed);
  auto fv = evaluate_all(pop, f, p.threads);
  std::vector<std::size_t> blocks = codec.blocks.empty() ? std::vector<std::size_t>{codec.dim} : codec.blocks;
  if (std::accumulate(blocks.begin(), blocks.end(), std::size_t{0}) != codec.dim)
    fail(ErrorKind::Dimension, "codec blocks do not cover the candidate");
  std::vector<std::mt19937_64> rng;
  for (std::size_t i = 0; i < P; ++i) rng.push_back(candidate_rng(p.seed, i));
  std::uniform_int_distribution<std::size_t> pick(0, P - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  OptRun run;
  run.keep_history = keep_history;
  for (int ep = 1; ep <= p.max_episode; ++ep) {
    for (std::size_t i = 0; i < P; ++i) {
      auto& g = rng[i];
      const std::size_t p1 = pick(g), p2 = pick(g), p3 = pick(g);
      const RVec G = pop[p1] + p.c * (pop[p2] - pop[p3]);
      RVec Q = pop[i];
      std::size_t off = 0;
      for (std::size_t b : blocks) {
        std::uniform_int_distribution<std::size_t> ai(0, b - 1);
        const std::size_t a = ai(g);
        for (std::size_t j = 0; j < b; ++j)
          if (unit(g) <= p.cr || j == a) Q(off + j) = G(off + j);
        off += b;
      }
      project(codec, Q);
      const double fq = f(Q);
      if (fv[i] < fq) {
        pop[i] = std::move(Q);
        fv[i] = fq;
      }
    }
    const std::size_t b = argmax_first(fv);
    run.values.push_back(fv[b]);
    if (keep_history) run.history.push_back(pop[b]);
    run.best = pop[b];
    run.best_value = fv[b];
    run.episodes = ep;
  }
  if (p.max_episode <= 0) {
    const std::size_t b = argmax_first(fv);
    run.best = pop[b];
    run.best_value = fv[b];
  }
  return run;
}

OptRun nm_run(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init,
              bool keep_history) {
  if (p.p_num < 3) fail(ErrorKind::Config, "NM needs p_num >= 3 vertices");
  const std::size_t V = p.p_num, n = V - 1;
  auto pop = initial_population(codec, V, init, p.seed);
  auto fv = evaluate_all(pop, f, p.threads);
  OptRun run;
  run.keep_history = keep_history;
  auto shrink = [&]() {
    for (std::size_t k = 1; k < V; ++k) {
      pop[k] = pop[0] + p.as0 * (pop[k] - pop[0]);
      project(codec, pop[k]);
      fv[k] = f(pop[k]);
    }
  };
  for (int ep = 1; ep <= p.max_episode; ++ep) {
    std::vector<std::size_t> order(V);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] > fv[b]; });
    std::vector<RVec> sp;
    std::vector<double> sf;
    for (auto o : order) {
      sp.push_back(pop[o]);
      sf.push_back(fv[o]);
    }
    pop = std::move(sp);
    fv = std::move(sf);

    RVec xa = RVec::Zero(codec.dim);
    for (std::size_t k = 0; k < n; ++k) xa += pop[k];
    xa /= static_cast<double>(n);
    project(codec, xa);
    RVec xr = xa + p.ar * (xa - pop[n]);
    project(codec, xr);
    const double fr = f(xr);
    if (fr > fv[0]) {
      RVec xe = xa + p.ae * (xr - xa);
      project(codec, xe);
      const double fe = f(xe);
      if (fr >= fe) {
        pop[n] = xr;
        fv[n] = fr;
      } else {
        pop[n] = xe;
        fv[n] = fe;
      }
    } else if (fv[0] >= fr && fr > fv[n - 1]) {
      pop[n] = xr;
      fv[n] = fr;
    } else if (fv[n - 1] >= fr && fr > fv[n]) {
      RVec xoc = xa + p.ac * (xr - xa);
      project(codec, xoc);
      const double foc = f(xoc);
      if (foc >= fr) {
        pop[n] = xoc;
        fv[n] = foc;
      } else {
        shrink();
      }
    } else {
      RVec xic = xa - p.ac * (xa - pop[n]);
      project(codec, xic);
      const double fic = f(xic);
      if (fic > fv[n]) {
        pop[n] = xic;
        fv[n] = fic;
      } else {
        shrink();
      }
    }
    const std::size_t b = argmax_first(fv);
    run.values.push_back(fv[b]);
    if (keep_history) run.history.push_back(pop[b]);
    run.best = pop[b];
    run.best_value = fv[b];
    run.episodes = ep;
  }
  return run;
}

OptRun gradient_run(const Codec& codec, const GradEvaluator& f, const AlgoParams& p, const RVec& init,
                    bool keep_history) {
  if (static_cast<std::size_t>(init.size()) != codec.dim) fail(ErrorKind::Dimension, "initial guess has wrong size");
  RVec x = init;
  project(codec, x);
  AdamState st;
  OptRun run;
  run.keep_history = keep_history;
  run.best_value = -std::numeric_limits<double>::infinity();
  RVec g(codec.dim);
  auto consider = [&](double v) {
    if (v > run.best_value) {
      run.best_value = v;
      run.best = x;
    }
  };
  for (int ep = 1; ep <= p.max_episode; ++ep) {
    g.setZero();
    const double v = f(x, g);
    consider(v);
    run.values.push_back(v);
    if (keep_history) run.history.push_back(x);
    ascent_step(x, g, st, p);
    project(codec, x);
    run.episodes = ep;
  }
  g.setZero();
  consider(f(x, g));
  return run;
}

RVec encode_state(const Vec& psi) {
  RVec v(2 * psi.size());
  v.head(psi.size()) = psi.real();
  v.tail(psi.size()) = psi.imag();
  return v;
}

Vec decode_state(const RVec& v) {
  const auto d = v.size() / 2;
  Vec psi(d);
  for (Eigen::Index i = 0; i < d; ++i) psi(i) = cplx(v(i), v(d + i));
  const double nrm = psi.norm();
  if (nrm == 0.0) fail(ErrorKind::Domain, "state coefficients vanish");
  return psi / nrm;
}

Codec state_codec(Eigen::Index dim) {
  Codec c;
  c.dim = 2 * dim;
  c.random = [dim](std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    RVec v(2 * dim);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = nd(rng);
    return v;
  };
  c.project = [](RVec& v) {
    const double nrm = v.norm();
    if (nrm == 0.0) {
      v.setZero();
      v(0) = 1.0;
    } else {
      v /= nrm;
    }
  };
  return c;
}

OptRun ri_run(const KrausChannel& ch, const Vec& psi0, const AlgoParams& p, bool keep_history) {
  check_channel(ch);
  if (ch.dK.empty() || ch.dK.front().size() != 1)
    fail(ErrorKind::Unsupported, "reverse iteration works for single-parameter channels only");
  const auto d = ch.K.front().cols();
  Vec psi;
  if (psi0.size() == 0) {
    auto rng = candidate_rng(p.seed, 0);
    const Codec c = state_codec(d);
    psi = decode_state(c.random(rng));
  } else {
    if (psi0.size() != d) fail(ErrorKind::Dimension, "psi0 dimension does not match the channel");
    psi = psi0 / psi0.norm();
  }
  OptRun run;
  run.keep_history = keep_history;
  run.best_value = -std::numeric_limits<double>::infinity();
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int ep = 1; ep <= p.max_episode; ++ep) {
    const DerivedState ds = kraus_apply(ket_projector(psi), ch);
    const Mat L = sld(ds).ops.front();
    const double F = (ds.rho * L * L).trace().real();
    if (F > run.best_value) {
      run.best_value = F;
      run.best = encode_state(psi);
    }
    run.values.push_back(run.best_value);
    if (keep_history) run.history.push_back(encode_state(psi));
    run.episodes = ep;
    if (std::abs(F - prev) < 1e-8) break;
    prev = F;
    Mat m = Mat::Zero(d, d);
    for (std::size_t i = 0; i < ch.K.size(); ++i) {
      const Mat& k = ch.K[i];
      const Mat& dk = ch.dK[i][0];
      m += 2.0 * (dk.adjoint() * L * k + k.adjoint() * L * dk) - k.adjoint() * L * L * k;
    }
    const Spectrum sp = eigh((m + m.adjoint()) / 2.0);
    psi = sp.vectors.col(d - 1);
  }
  return run;
}

}  // namespace qmetro
