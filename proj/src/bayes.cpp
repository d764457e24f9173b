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

#include "qmetro/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qmetro {

std::size_t PriorGrid::size() const {
  std::size_t n = 1;
  for (const auto& ax : axes) n *= ax.size();
  return axes.empty() ? 0 : n;
}

std::vector<double> PriorGrid::point(std::size_t flat) const {
  std::vector<double> x(axes.size());
  for (std::size_t k = axes.size(); k-- > 0;) {
    const auto n = axes[k].size();
    x[k] = axes[k][flat % n];
    flat /= n;
  }
  return x;
}

RVec trapezoid_weights(const std::vector<double>& axis) {
  const auto n = static_cast<Eigen::Index>(axis.size());
  if (n == 0) fail(ErrorKind::Dimension, "empty integration axis");
  RVec w = RVec::Zero(n);
  if (n == 1) {
    w(0) = 1.0;
    return w;
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = axis[i + 1] - axis[i];
    if (!(h > 0.0)) fail(ErrorKind::Domain, "grid axis must be strictly increasing");
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

RVec grid_weights(const std::vector<std::vector<double>>& axes) {
  RVec w = RVec::Ones(1);
  for (const auto& ax : axes) {
    const RVec wa = trapezoid_weights(ax);
    RVec next(w.size() * wa.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) next.segment(i * wa.size(), wa.size()) = w(i) * wa;
    w = std::move(next);
  }
  return w;
}

double integrate(const PriorGrid& g, const RVec& values) { return grid_weights(g.axes).dot(values); }

void check_grid(const PriorGrid& g, bool need_states) {
  if (g.axes.empty()) fail(ErrorKind::Dimension, "prior grid has no axes");
  std::size_t total = 1;
  for (const auto& ax : g.axes) {
    if (ax.empty()) fail(ErrorKind::Dimension, "prior grid axis is empty");
    for (std::size_t i = 1; i < ax.size(); ++i)
      if (!(ax[i] > ax[i - 1])) fail(ErrorKind::Domain, "prior grid axis must be strictly increasing");
    total *= ax.size();
  }
  if (static_cast<std::size_t>(g.p.size()) != total) fail(ErrorKind::Dimension, "prior array does not match grid shape");
  if ((g.p.array() < 0.0).any()) fail(ErrorKind::Domain, "prior has negative entries");
  if (!g.dp.empty()) {
    if (g.dp.size() != total) fail(ErrorKind::Dimension, "dp does not match grid shape");
    for (const auto& d : g.dp)
      if (static_cast<std::size_t>(d.size()) != g.nparams()) fail(ErrorKind::Dimension, "dp entry length mismatch");
  }
  if (need_states) {
    if (g.states.size() != total) fail(ErrorKind::Dimension, "grid states do not match grid shape");
    for (const auto& s : g.states)
      if (s.nparams() != g.nparams()) fail(ErrorKind::Dimension, "state derivative count does not match grid axes");
  }
}

void normalize_prior(PriorGrid& g) {
  const double z = integrate(g, g.p);
  if (!(z > 0.0)) fail(ErrorKind::Degeneracy, "prior integrates to zero");
  g.p /= z;
  for (auto& d : g.dp) d /= z;
}

std::vector<RVec> likelihood_table(const PriorGrid& g, const Povm& M) {
  check_povm(M);
  const std::size_t n = g.size();
  std::vector<RVec> lik(M.size(), RVec(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (g.states[i].dim() != M.dim()) fail(ErrorKind::Dimension, "POVM and state dimensions differ");
    for (std::size_t y = 0; y < M.size(); ++y)
      lik[y](i) = std::max(0.0, (g.states[i].rho * M.ops[y]).trace().real());
  }
  return lik;
}

namespace {

std::size_t argmax_lowest(const RVec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

void check_outcomes(const std::vector<int>& y, std::size_t m) {
  for (int v : y)
    if (v < 0 || static_cast<std::size_t>(v) >= m) fail(ErrorKind::Domain, "outcome index out of range");
}

// Symmetric pseudo-inverse; eigenvalues with |lambda| <= eps are dropped.
RMat pinv_sym(const RMat& a, double eps, bool& flagged) {
  Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (a + a.transpose()));
  RVec inv = RVec::Zero(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (std::abs(es.eigenvalues()(i)) > eps) inv(i) = 1.0 / es.eigenvalues()(i);
    else flagged = true;
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

RVec bias_at(const BiasSpec& b, std::size_t i, std::size_t n) {
  return b.empty() ? RVec::Zero(n) : b.b[i];
}

RMat bias_matrix(const BiasSpec& b, std::size_t i, std::size_t n) {
  RMat B = RMat::Identity(n, n);
  if (!b.empty()) B.diagonal() += b.db[i];
  return B;
}

void check_bias(const BiasSpec& b, const PriorGrid& g) {
  if (b.empty()) return;
  if (b.b.size() != g.size() || b.db.size() != g.size()) fail(ErrorKind::Dimension, "bias arrays do not match grid");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (static_cast<std::size_t>(b.b[i].size()) != g.nparams() ||
        static_cast<std::size_t>(b.db[i].size()) != g.nparams())
      fail(ErrorKind::Dimension, "bias entry length mismatch");
}

std::vector<RMat> pointwise_cfim(const PriorGrid& g, const Povm& M, double eps) {
  std::vector<RMat> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = cfim(g.states[i], M, eps).entries;
  return out;
}

std::vector<RMat> pointwise_qfim(const PriorGrid& g, LdType ld, double eps) {
  std::vector<RMat> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = qfim(g.states[i], ld, eps).entries;
  return out;
}

BoundResult crb_family(const PriorGrid& g, const std::vector<RMat>& info, const BiasSpec& bias, int btype,
                       double eps) {
  const std::size_t n = g.nparams();
  const RVec w = grid_weights(g.axes);
  BoundResult r;
  r.value = RMat::Zero(n, n);
  if (btype == 1) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double wp = w(i) * g.p(i);
      if (wp == 0.0) continue;
      const RMat B = bias_matrix(bias, i, n);
      const RVec b = bias_at(bias, i, n);
      r.value += wp * (B * pinv_sym(info[i], eps, r.pseudo_inverse) * B + b * b.transpose());
    }
  } else if (btype == 2) {
    RMat ib = RMat::Zero(n, n), bb = RMat::Zero(n, n), bbt = RMat::Zero(n, n);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double wp = w(i) * g.p(i);
      if (wp == 0.0) continue;
      const RVec b = bias_at(bias, i, n);
      ib += wp * info[i];
      bb += wp * bias_matrix(bias, i, n);
      bbt += wp * b * b.transpose();
    }
    r.value = bb * pinv_sym(ib, eps, r.pseudo_inverse) * bb + bbt;
  } else if (btype == 3) {
    if (g.dp.empty()) fail(ErrorKind::Config, "type 3 bound requires dp");
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double wp = w(i) * g.p(i);
      if (wp == 0.0) continue;
      const RVec dl = g.dp[i] / g.p(i);
      const RVec b = bias_at(bias, i, n);
      RMat G = bias_matrix(bias, i, n) + b * dl.transpose();
      const RMat ip = dl * dl.transpose();
      r.value += wp * G * pinv_sym(ip + info[i], eps, r.pseudo_inverse) * G.transpose();
    }
  } else {
    fail(ErrorKind::Config, "btype must be 1, 2 or 3");
  }
  return r;
}

RMat prior_info(const PriorGrid& g) {
  if (g.dp.empty()) fail(ErrorKind::Config, "prior information requires dp");
  const std::size_t n = g.nparams();
  const RVec w = grid_weights(g.axes);
  RMat ip = RMat::Zero(n, n);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.p(i) <= 0.0) continue;
    ip += w(i) * g.dp[i] * g.dp[i].transpose() / g.p(i);
  }
  return ip;
}

RMat average(const PriorGrid& g, const std::vector<RMat>& info) {
  const RVec w = grid_weights(g.axes);
  RMat acc = RMat::Zero(g.nparams(), g.nparams());
  for (std::size_t i = 0; i < g.size(); ++i) acc += w(i) * g.p(i) * info[i];
  return acc;
}

}  // namespace

std::vector<double> estimate(const PriorGrid& g, const RVec& post, Estimator est) {
  if (est == Estimator::MAP) return g.point(argmax_lowest(post));
  const RVec w = grid_weights(g.axes);
  std::vector<double> mean(g.nparams(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto x = g.point(i);
    for (std::size_t a = 0; a < x.size(); ++a) mean[a] += w(i) * post(i) * x[a];
  }
  return mean;
}

BayesResult bayes_update(const PriorGrid& g, const Povm& M, const std::vector<int>& y, Estimator est,
                         bool save_all) {
  check_grid(g);
  check_outcomes(y, M.size());
  const auto lik = likelihood_table(g, M);
  const RVec w = grid_weights(g.axes);
  BayesResult r;
  r.posterior = g.p;
  for (int yi : y) {
    r.posterior = r.posterior.cwiseProduct(lik[yi]);
    const double z = w.dot(r.posterior);
    if (!(z > 0.0)) fail(ErrorKind::Degeneracy, "posterior vanished on the grid");
    r.posterior /= z;
    r.estimates.push_back(estimate(g, r.posterior, est));
    if (save_all) r.history.push_back(r.posterior);
  }
  return r;
}

BayesResult mle(const PriorGrid& g, const Povm& M, const std::vector<int>& y, bool save_all) {
  check_grid(g);
  check_outcomes(y, M.size());
  const auto lik = likelihood_table(g, M);
  RVec logl = RVec::Zero(g.size());
  BayesResult r;
  auto scaled = [&]() {
    const double mx = logl.maxCoeff();
    if (!std::isfinite(mx)) return RVec(RVec::Zero(logl.size()));
    return RVec((logl.array() - mx).exp());
  };
  for (int yi : y) {
    logl += lik[yi].array().log().matrix();
    r.estimates.push_back(g.point(argmax_lowest(logl)));
    if (save_all) r.history.push_back(scaled());
  }
  r.posterior = scaled();
  return r;
}

double bayes_cost(const PriorGrid& g, const std::vector<std::vector<double>>& xest, const Povm& M, const RMat& W) {
  check_grid(g);
  const std::size_t n = g.nparams();
  if (xest.size() != M.size()) fail(ErrorKind::Dimension, "one estimate per outcome is required");
  for (const auto& e : xest)
    if (e.size() != n) fail(ErrorKind::Dimension, "estimate length does not match parameter count");
  RMat Wm = n == 1 ? RMat::Identity(1, 1) : W;
  if (n > 1) check_weight(Wm, n);
  const auto lik = likelihood_table(g, M);
  const RVec w = grid_weights(g.axes);
  double c = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g.p(i) == 0.0) continue;
    const auto x = g.point(i);
    double inner = 0.0;
    for (std::size_t y = 0; y < M.size(); ++y) {
      RVec d(n);
      for (std::size_t a = 0; a < n; ++a) d(a) = x[a] - xest[y][a];
      inner += lik[y](i) * d.dot(Wm * d);
    }
    c += w(i) * g.p(i) * inner;
  }
  return c;
}

double bcb(const PriorGrid& g, const RMat& W, double eps) {
  check_grid(g);
  const std::size_t n = g.nparams();
  check_weight(W, n);
  const RVec w = grid_weights(g.axes);
  const auto d = g.states.front().dim();
  Mat rbar = Mat::Zero(d, d);
  std::vector<Mat> rx(n, Mat::Zero(d, d));
  double xwx = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double wp = w(i) * g.p(i);
    if (wp == 0.0) continue;
    const auto x = g.point(i);
    const RVec xv = Eigen::Map<const RVec>(x.data(), n);
    rbar += wp * g.states[i].rho;
    for (std::size_t a = 0; a < n; ++a) rx[a] += wp * x[a] * g.states[i].rho;
    xwx += wp * xv.dot(W * xv);
  }
  const Spectrum sp = eigh(rbar);
  std::vector<Mat> L(n);
  for (std::size_t a = 0; a < n; ++a) L[a] = sylvester_symmetric(sp, 2.0 * rx[a], eps);
  double sub = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      if (W(a, b) == 0.0) continue;
      sub += W(a, b) * (rbar * L[a] * L[b]).trace().real();
    }
  return xwx - sub;
}

BoundResult bcrb(const PriorGrid& g, const Povm& M, const BiasSpec& bias, int btype, double eps) {
  check_grid(g);
  check_bias(bias, g);
  return crb_family(g, pointwise_cfim(g, M, eps), bias, btype, eps);
}

BoundResult bqcrb(const PriorGrid& g, const BiasSpec& bias, int btype, LdType ld, double eps) {
  check_grid(g);
  check_bias(bias, g);
  return crb_family(g, pointwise_qfim(g, ld, eps), bias, btype, eps);
}

BoundResult vtb(const PriorGrid& g, const Povm& M, double eps) {
  check_grid(g);
  BoundResult r;
  r.value = pinv_sym(prior_info(g) + average(g, pointwise_cfim(g, M, eps)), eps, r.pseudo_inverse);
  return r;
}

BoundResult qvtb(const PriorGrid& g, LdType ld, double eps) {
  check_grid(g);
  BoundResult r;
  r.value = pinv_sym(prior_info(g) + average(g, pointwise_qfim(g, ld, eps)), eps, r.pseudo_inverse);
  return r;
}

RMat avg_cfim(const PriorGrid& g, const Povm& M, double eps) {
  check_grid(g);
  return average(g, pointwise_cfim(g, M, eps));
}

RMat avg_qfim(const PriorGrid& g, LdType ld, double eps) {
  check_grid(g);
  return average(g, pointwise_qfim(g, ld, eps));
}

double qzzb(const PriorGrid& g, double /*eps*/) {
  check_grid(g);
  if (g.nparams() != 1) fail(ErrorKind::Unsupported, "qzzb supports a single parameter only");
  const auto& x = g.axes.front();
  const std::size_t n = x.size();
  if (n == 1) return 0.0;
  const double h = (x.back() - x.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(x[i] - x[i - 1] - h) > 1e-9 * std::max(1.0, std::abs(h)))
      fail(ErrorKind::Unsupported, "qzzb requires a uniform grid");
  // inner[j]: integral over x of min{p(x), p(x + tau_j)} (1 - |rho(x) - rho(x + tau_j)|_tr / 2)
  std::vector<double> inner(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t m = n - j;
    if (m < 2) break;
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double pm = std::min(g.p(i), g.p(i + j));
      if (pm == 0.0) continue;
      double td = 0.0;
      if (j > 0) td = 0.5 * trace_norm(g.states[i].rho - g.states[i + j].rho);
      const double f = pm * std::max(0.0, 1.0 - td);
      acc += (i == 0 || i == m - 1 ? 0.5 : 1.0) * h * f;
    }
    inner[j] = acc;
  }
  for (std::size_t j = n - 1; j-- > 0;) inner[j] = std::max(inner[j], inner[j + 1]);
  double outer = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double tau = h * static_cast<double>(j);
    outer += (j == 0 || j == n - 1 ? 0.5 : 1.0) * h * tau * inner[j];
  }
  return 0.5 * outer;
}

int sample_outcome(const RVec& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double total = probs.sum();
  const double r = u(rng) * total;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    acc += probs(k);
    if (r < acc) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size() - 1);
}

std::vector<int> simulate_outcomes(const Mat& rho, const Povm& M, std::size_t n, std::uint64_t seed) {
  check_povm(M);
  RVec probs(M.size());
  for (std::size_t y = 0; y < M.size(); ++y) probs(y) = std::max(0.0, (rho * M.ops[y]).trace().real());
  std::mt19937_64 rng(seed);
  std::vector<int> out(n);
  for (auto& v : out) v = sample_outcome(probs, rng);
  return out;
}

PriorGrid make_prior_grid(const std::string& template_id, const Constants& c,
                          const std::vector<std::vector<double>>& axes, const Mat& rho0,
                          const std::vector<double>& tspan, const std::vector<Decay>& decay) {
  const ModelGrid mg = model_grid(template_id, c, axes);
  PriorGrid g;
  g.axes = axes;
  g.states = evolve_grid(mg, rho0, tspan, decay);
  set_uniform_prior(g);
  return g;
}

void set_gaussian_prior(PriorGrid& g, double mu, double eta) {
  if (g.nparams() != 1) fail(ErrorKind::Unsupported, "Gaussian prior helper is single-parameter");
  if (!(eta > 0.0)) fail(ErrorKind::Domain, "prior width must be positive");
  const auto& x = g.axes.front();
  g.p.resize(x.size());
  g.dp.assign(x.size(), RVec(1));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - mu) / eta;
    g.p(i) = std::exp(-0.5 * z * z) / (eta * std::sqrt(2.0 * M_PI));
    g.dp[i](0) = -z / eta * g.p(i);
  }
  normalize_prior(g);
}

void set_uniform_prior(PriorGrid& g) {
  g.p = RVec::Ones(g.size());
  g.dp.assign(g.size(), RVec::Zero(g.nparams()));
  normalize_prior(g);
}

PriorGrid bayes_demo_grid(double lo, double hi, std::size_t n, double kappa, double T) {
  Vec plus(2);
  plus << 1.0, 1.0;
  plus /= std::sqrt(2.0);
  return make_prior_grid("bayes_demo", {{"kappa", kappa}, {"omega0", 1.0}}, {linspace(lo, hi, n)},
                         ket_projector(plus), linspace(0.0, T, 11), {});
}

Povm plus_minus_povm() {
  Vec plus(2), minus(2);
  plus << 1.0, 1.0;
  minus << 1.0, -1.0;
  return Povm{{ket_projector(plus / std::sqrt(2.0)), ket_projector(minus / std::sqrt(2.0))}};
}

}  // namespace qmetro
