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

#include "qmetro/adaptive.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace qmetro {

using nlohmann::json;

const char* to_string(Phase p) { return p == Phase::PreEstimation ? "pre-estimation" : "adaptive"; }

Phase parse_phase(const std::string& s) {
  if (s == "pre-estimation") return Phase::PreEstimation;
  if (s == "adaptive") return Phase::Adaptive;
  fail(ErrorKind::Config, "unknown session phase '" + s + "'");
}

XOpt find_x_opt(const PriorGrid& g, const Povm& M, const RMat& W, bool free_measurement, const AlgoParams& mopt) {
  check_grid(g);
  const auto n = static_cast<Eigen::Index>(g.nparams());
  const RMat Wm = weight_or_identity(W, n);
  check_weight(Wm, n);
  XOpt out;
  out.value = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const RMat F = free_measurement ? qfim(g.states[i]).entries : cfim(g.states[i], M).entries;
    const double v = tr_w_inv(F, Wm);
    if (!std::isfinite(v) || v <= 0.0) continue;
    // Values equal to rounding count as ties so the lowest index wins.
    if (!any || v < out.value * (1.0 - 1e-12)) {
      out.value = v;
      out.index = i;
      any = true;
    }
  }
  if (!any) fail(ErrorKind::Degeneracy, "information matrix is singular at every grid point");
  out.x = g.point(out.index);
  if (free_measurement) {
    MeasurementProblem mp;
    mp.state = g.states[out.index];
    mp.W = W;
    out.M = measurement_opt(mp, mopt).M;
  }
  return out;
}

std::vector<double> AdaptiveSession::xhat() const {
  PriorGrid g;
  g.axes = axes;
  return estimate(g, posterior, est);
}

AdaptiveSession make_session(const PriorGrid& g, const Povm& M, const std::vector<double>& x_opt,
                             std::size_t pre_rounds, Estimator est) {
  check_grid(g);
  if (x_opt.size() != g.nparams()) fail(ErrorKind::Dimension, "x_opt needs one entry per parameter");
  AdaptiveSession s;
  s.axes = g.axes;
  s.likelihood = likelihood_table(g, M);
  s.posterior = g.p;
  s.x_opt = x_opt;
  s.u.assign(g.nparams(), 0.0);
  s.pre_rounds = pre_rounds;
  s.est = est;
  if (pre_rounds == 0) {
    s.phase = Phase::Adaptive;
    const auto xh = s.xhat();
    for (std::size_t a = 0; a < xh.size(); ++a) s.u[a] = x_opt[a] - xh[a];
  }
  return s;
}

double interpolate(const std::vector<std::vector<double>>& axes, const RVec& values, const std::vector<double>& x) {
  const std::size_t n = axes.size();
  std::vector<std::size_t> lo(n), stride(n);
  std::vector<double> frac(n);
  std::size_t st = 1;
  for (std::size_t a = n; a-- > 0;) {
    stride[a] = st;
    st *= axes[a].size();
  }
  for (std::size_t a = 0; a < n; ++a) {
    const auto& ax = axes[a];
    if (ax.size() == 1) {
      lo[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    const double v = std::clamp(x[a], ax.front(), ax.back());
    std::size_t k = static_cast<std::size_t>(std::upper_bound(ax.begin(), ax.end(), v) - ax.begin());
    k = std::clamp<std::size_t>(k, 1, ax.size() - 1) - 1;
    lo[a] = k;
    frac[a] = (v - ax[k]) / (ax[k + 1] - ax[k]);
  }
  double out = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < n; ++a) {
      const bool up = (corner >> a) & 1U;
      if (up && axes[a].size() == 1) {
        w = 0.0;
        break;
      }
      w *= up ? frac[a] : 1.0 - frac[a];
      flat += (lo[a] + (up ? 1 : 0)) * stride[a];
    }
    if (w != 0.0) out += w * values(static_cast<Eigen::Index>(flat));
  }
  return out;
}

RVec shifted_likelihood(const AdaptiveSession& s, int y, const std::vector<double>& u) {
  if (y < 0 || static_cast<std::size_t>(y) >= s.outcomes()) fail(ErrorKind::Domain, "outcome index out of range");
  const RVec& base = s.likelihood[static_cast<std::size_t>(y)];
  bool zero = true;
  for (double v : u) zero = zero && v == 0.0;
  if (zero) return base;
  PriorGrid g;
  g.axes = s.axes;
  RVec out(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    auto x = g.point(static_cast<std::size_t>(i));
    for (std::size_t a = 0; a < x.size(); ++a) x[a] += u[a];
    out(i) = interpolate(s.axes, base, x);
  }
  return out;
}

namespace {

void check_outcome(const AdaptiveSession& s, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= s.outcomes()) {
    fail(ErrorKind::Domain, "outcome index " + std::to_string(y) + " out of range; the measurement has " +
                                std::to_string(s.outcomes()) + " outcomes");
  }
}

RoundResult apply_round(AdaptiveSession& s, int y, const std::vector<double>& u) {
  check_outcome(s, y);
  const RVec w = grid_weights(s.axes);
  RVec post = s.posterior.cwiseProduct(shifted_likelihood(s, y, u));
  const double z = w.dot(post);
  if (!(z > 0.0) || !std::isfinite(z)) fail(ErrorKind::Degeneracy, "posterior vanished on the grid");
  post /= z;
  s.posterior = std::move(post);
  ++s.round;
  const auto xh = s.xhat();
  s.history.push_back({y, u, xh, s.phase});
  if (s.phase == Phase::PreEstimation && s.round >= s.pre_rounds) s.phase = Phase::Adaptive;
  if (s.phase == Phase::Adaptive)
    for (std::size_t a = 0; a < xh.size(); ++a) s.u[a] = s.x_opt[a] - xh[a];
  return {s.u, xh, s.round, s.phase};
}

}  // namespace

RoundResult submit_outcome(AdaptiveSession& s, int y) {
  if (s.phase != Phase::Adaptive) fail(ErrorKind::Config, "session is still in pre-estimation");
  return apply_round(s, y, s.u);
}

RoundResult pre_estimate(AdaptiveSession& s, const std::vector<int>& y) {
  if (s.phase != Phase::PreEstimation) fail(ErrorKind::Config, "session has left pre-estimation");
  RoundResult r{s.u, s.xhat(), s.round, s.phase};
  const std::vector<double> zero(s.nparams(), 0.0);
  for (int v : y) {
    if (s.phase != Phase::PreEstimation) fail(ErrorKind::Config, "more outcomes than the pre-estimation budget");
    r = apply_round(s, v, zero);
  }
  return r;
}

RoundResult step(AdaptiveSession& s, int y) {
  return s.phase == Phase::PreEstimation ? pre_estimate(s, {y}) : submit_outcome(s, y);
}

namespace {

json rvec_json(const RVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

RVec json_rvec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const RVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string session_to_json(const AdaptiveSession& s) {
  json j;
  j["version"] = 1;
  j["axes"] = s.axes;
  json lik = json::array();
  for (const auto& l : s.likelihood) lik.push_back(rvec_json(l));
  j["likelihood"] = lik;
  j["posterior"] = rvec_json(s.posterior);
  j["x_opt"] = s.x_opt;
  j["u"] = s.u;
  j["round"] = s.round;
  j["pre_rounds"] = s.pre_rounds;
  j["phase"] = to_string(s.phase);
  j["estimator"] = s.est == Estimator::MAP ? "MAP" : "mean";
  json h = json::array();
  for (const auto& r : s.history) h.push_back({{"y", r.y}, {"u", r.u}, {"xhat", r.xhat}, {"phase", to_string(r.phase)}});
  j["history"] = h;
  return j.dump();
}

AdaptiveSession session_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != 1) fail(ErrorKind::Config, "unsupported session version");
    AdaptiveSession s;
    s.axes = j.at("axes").get<std::vector<std::vector<double>>>();
    for (const auto& l : j.at("likelihood")) s.likelihood.push_back(json_rvec(l));
    s.posterior = json_rvec(j.at("posterior"));
    s.x_opt = j.at("x_opt").get<std::vector<double>>();
    s.u = j.at("u").get<std::vector<double>>();
    s.round = j.at("round").get<std::size_t>();
    s.pre_rounds = j.at("pre_rounds").get<std::size_t>();
    s.phase = parse_phase(j.at("phase").get<std::string>());
    s.est = j.at("estimator").get<std::string>() == "MAP" ? Estimator::MAP : Estimator::Mean;
    for (const auto& r : j.at("history"))
      s.history.push_back({r.at("y").get<int>(), r.at("u").get<std::vector<double>>(),
                           r.at("xhat").get<std::vector<double>>(), parse_phase(r.at("phase").get<std::string>())});
    std::size_t n = 1;
    for (const auto& a : s.axes) n *= a.size();
    if (static_cast<std::size_t>(s.posterior.size()) != n) fail(ErrorKind::Config, "session posterior size mismatch");
    for (const auto& l : s.likelihood)
      if (static_cast<std::size_t>(l.size()) != n) fail(ErrorKind::Config, "session likelihood size mismatch");
    if (s.x_opt.size() != s.axes.size() || s.u.size() != s.axes.size())
      fail(ErrorKind::Config, "session offsets do not match the parameter count");
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("malformed session: ") + e.what());
  }
}

OutcomeModel template_outcome_model(const std::string& template_id, const Constants& c, const Mat& rho0,
                                    const std::vector<double>& tspan, const std::vector<Decay>& decay, const Povm& M) {
  check_povm(M);
  return [=](const std::vector<double>& x) {
    std::vector<std::vector<double>> axes;
    for (double v : x) axes.push_back({v});
    const auto st = evolve_grid(model_grid(template_id, c, axes), rho0, tspan, decay);
    RVec p(static_cast<Eigen::Index>(M.size()));
    for (std::size_t y = 0; y < M.size(); ++y)
      p(static_cast<Eigen::Index>(y)) = std::max(0.0, (st.front().rho * M.ops[y]).trace().real());
    return p;
  };
}

AdaptiveSimulation simulate_adaptive(AdaptiveSession s, const OutcomeModel& truth, const std::vector<double>& x_true,
                                     std::size_t rounds, std::uint64_t seed) {
  if (x_true.size() != s.nparams()) fail(ErrorKind::Dimension, "x_true needs one entry per parameter");
  std::mt19937_64 rng(seed);
  AdaptiveSimulation out;
  for (std::size_t n = 0; n < rounds; ++n) {
    std::vector<double> x = x_true;
    if (s.phase == Phase::Adaptive)
      for (std::size_t a = 0; a < x.size(); ++a) x[a] += s.u[a];
    const int y = sample_outcome(truth(x), rng);
    const RoundResult r = step(s, y);
    out.y.push_back(y);
    out.xhat.push_back(r.xhat);
  }
  out.session = std::move(s);
  return out;
}

}  // namespace qmetro
