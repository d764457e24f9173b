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

#include "qmetro/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace qmetro {

Eigen::Index Parameterization::dim() const {
  if (dynamics) return dynamics->dim();
  if (kraus && !kraus->K.empty()) return kraus->K.front().cols();
  return 0;
}

std::size_t Parameterization::nparams() const {
  if (dynamics) return dynamics->dH.size();
  if (kraus && !kraus->dK.empty()) return kraus->dK.front().size();
  return 0;
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::Unsupported, msg);
}

std::string algo_name(const AlgoParams& p) { return to_string(p.algo); }

bool is_gradient(Algorithm a) { return a == Algorithm::GRAPE || a == Algorithm::AutoGRAPE || a == Algorithm::AD; }

// HCRB solves are costly and repeat for identical candidates (PSO resets, DE rejections).
class HcrbCache {
 public:
  double get(const DerivedState& ds, const ObjectiveSpec& obj) {
    std::string key(reinterpret_cast<const char*>(ds.rho.data()), sizeof(cplx) * ds.rho.size());
    for (const auto& m : ds.drho) key.append(reinterpret_cast<const char*>(m.data()), sizeof(cplx) * m.size());
    {
      std::lock_guard<std::mutex> lk(mu_);
      auto it = memo_.find(key);
      if (it != memo_.end()) return it->second;
    }
    const double v = objective_value(ds, obj);
    std::lock_guard<std::mutex> lk(mu_);
    if (memo_.size() > 4096) memo_.clear();
    memo_.emplace(std::move(key), v);
    return v;
  }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, double> memo_;
};

struct ObjectiveFn {
  ObjectiveSpec obj;
  std::shared_ptr<HcrbCache> cache;
  explicit ObjectiveFn(ObjectiveSpec o) : obj(std::move(o)) {
    if (obj.kind == ObjectiveKind::HCRB) cache = std::make_shared<HcrbCache>();
  }
  double operator()(const DerivedState& ds) const { return cache ? cache->get(ds, obj) : objective_value(ds, obj); }
};

void check_objective(const ObjectiveSpec& obj, std::size_t nparams, const AlgoParams& p) {
  if (nparams == 0) fail(ErrorKind::Dimension, "the model has no parameter derivatives");
  if (obj.kind == ObjectiveKind::HCRB && nparams < 2)
    fail(ErrorKind::Config, "HCRB objective needs at least two parameters; use QFIM instead");
  if (obj.W.size() > 0) check_weight(obj.W, static_cast<Eigen::Index>(nparams));
  if (is_gradient(p.algo)) {
    require(obj.kind != ObjectiveKind::HCRB, algo_name(p) + " is not available for the HCRB objective");
    require(obj.kind != ObjectiveKind::QFIM || obj.ld == LdType::SLD, algo_name(p) + " supports only SLD objectives");
  }
}

OptRun run_population(const Codec& codec, const Evaluator& f, const AlgoParams& p, const std::vector<RVec>& init,
                      bool keep_history) {
  switch (p.algo) {
    case Algorithm::PSO: return pso_run(codec, f, p, init, keep_history);
    case Algorithm::DE: return de_run(codec, f, p, init, keep_history);
    case Algorithm::NM: return nm_run(codec, f, p, init, keep_history);
    default: fail(ErrorKind::Unsupported, std::string(to_string(p.algo)) + " is not a population method");
  }
}

// Concatenation of codecs; segments are views into one candidate vector.
struct Joint {
  std::vector<Codec> parts;
  std::vector<std::size_t> offsets;
  Codec codec() const {
    Codec c;
    for (const auto& part : parts) c.dim += part.dim;
    const auto ps = parts;
    const auto off = offsets;
    c.random = [ps](std::mt19937_64& rng) {
      std::vector<RVec> segs;
      Eigen::Index n = 0;
      for (const auto& part : ps) {
        segs.push_back(part.random(rng));
        n += segs.back().size();
      }
      RVec v(n);
      Eigen::Index o = 0;
      for (const auto& s : segs) {
        v.segment(o, s.size()) = s;
        o += s.size();
      }
      return v;
    };
    c.project = [ps, off](RVec& v) {
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i].project) continue;
        RVec s = v.segment(static_cast<Eigen::Index>(off[i]), static_cast<Eigen::Index>(ps[i].dim));
        ps[i].project(s);
        v.segment(static_cast<Eigen::Index>(off[i]), s.size()) = s;
      }
    };
    for (const auto& part : parts) {
      if (part.blocks.empty())
        c.blocks.push_back(part.dim);
      else
        c.blocks.insert(c.blocks.end(), part.blocks.begin(), part.blocks.end());
    }
    return c;
  }
  void add(Codec c) {
    offsets.push_back(parts.empty() ? 0 : offsets.back() + parts.back().dim);
    parts.push_back(std::move(c));
  }
  RVec segment(const RVec& v, std::size_t i) const {
    return v.segment(static_cast<Eigen::Index>(offsets[i]), static_cast<Eigen::Index>(parts[i].dim));
  }
};

// Controls and evolution shared by control, SC, CM and SCM runs.
struct ControlSetup {
  DynamicsSpec spec;  // normalized with zero controls of length Nc
  std::size_t K = 0, Nc = 0;
  std::optional<Bound> bound;

  ControlSetup(const DynamicsSpec& raw, std::size_t nc, const std::optional<Bound>& b) : bound(b) {
    if (raw.Hc.empty()) fail(ErrorKind::Config, "control optimization needs at least one control Hamiltonian");
    if (bound && !(bound->first < bound->second)) fail(ErrorKind::Config, "control bound needs lower < upper");
    DynamicsSpec s = raw;
    K = s.Hc.size();
    Nc = nc == 0 ? s.steps() : nc;
    if (Nc == 0) fail(ErrorKind::Domain, "tspan needs at least two points");
    s.ctrl.assign(K, std::vector<double>(Nc, 0.0));
    spec = normalize_spec(s);
  }
  DynamicsSpec with(const ControlTable& c) const {
    DynamicsSpec s = spec;
    s.ctrl = c;
    return s;
  }
  ControlTable zero() const {
    RVec z = RVec::Zero(static_cast<Eigen::Index>(K * Nc));
    const Codec c = codec();
    if (c.project) c.project(z);
    return decode_controls(z, K, Nc);
  }
  Codec codec() const { return control_codec(K, Nc, bound); }
  void check(const ControlTable& c) const {
    if (c.size() != K) fail(ErrorKind::Dimension, "control guess needs one row per control Hamiltonian");
    for (const auto& row : c)
      if (row.size() != Nc) fail(ErrorKind::Dimension, "control guess has the wrong number of amplitudes");
  }
};

// Gradient of Re Tr(lambda^† psi psi^†) with respect to [Re c, Im c].
RVec coefficient_gradient(const Mat& lambda, const Vec& psi) {
  const Mat h = 0.5 * (lambda + lambda.adjoint());
  const Vec w = 2.0 * h * psi;
  RVec g(2 * psi.size());
  g.head(psi.size()) = w.real();
  g.tail(psi.size()) = w.imag();
  return g;
}

// Adjoint of the Kraus map rho0 -> (rho, drho).
Mat kraus_pullback(const KrausChannel& ch, const Mat& g_rho, const std::vector<Mat>& g_drho) {
  const auto d = ch.K.front().cols();
  Mat out = Mat::Zero(d, d);
  for (std::size_t i = 0; i < ch.K.size(); ++i) {
    const Mat& k = ch.K[i];
    out += k.adjoint() * g_rho * k;
    for (std::size_t a = 0; a < g_drho.size(); ++a)
      out += ch.dK[i][a].adjoint() * g_drho[a] * k + k.adjoint() * g_drho[a] * ch.dK[i][a];
  }
  return out;
}

// Final state as a function of rho0 for a parameterization without controls.
struct StateMap {
  std::optional<TransferMap> tm;
  std::optional<KrausChannel> ch;
  explicit StateMap(const Parameterization& m) {
    if (m.dynamics) {
      tm = transfer_map(*m.dynamics);
    } else if (m.kraus) {
      check_channel(*m.kraus);
      ch = *m.kraus;
    } else {
      fail(ErrorKind::Config, "state optimization needs dynamics or Kraus operators");
    }
  }
  DerivedState apply(const Mat& rho0) const { return tm ? tm->apply(rho0) : kraus_apply(rho0, *ch); }
  Mat pullback(const Mat& g_rho, const std::vector<Mat>& g_drho) const {
    return tm ? tm->pullback(g_rho, g_drho) : kraus_pullback(*ch, g_rho, g_drho);
  }
};

double state_value_gradient(const StateMap& map, const ObjectiveSpec& obj, const Vec& psi, RVec& grad) {
  const ObjectiveGradient og = objective_gradient(map.apply(ket_projector(psi)), obj);
  grad = coefficient_gradient(map.pullback(og.d_rho, og.d_drho), psi);
  return og.value;
}

void check_psi(const Vec& psi, Eigen::Index d) {
  if (psi.size() != d) fail(ErrorKind::Dimension, "initial state has the wrong dimension");
  if (psi.norm() == 0.0) fail(ErrorKind::Domain, "initial state vanishes");
}

}  // namespace

Codec control_codec(std::size_t K, std::size_t Nc, const std::optional<Bound>& bound) {
  Codec c;
  c.dim = K * Nc;
  const double lo = bound ? bound->first : -1.0, hi = bound ? bound->second : 1.0;
  // Unbounded problems draw random guesses from [-1, 1].
  c.random = [dim = c.dim, lo = std::isfinite(lo) ? lo : -1.0, hi = std::isfinite(hi) ? hi : 1.0](
                 std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    RVec v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = u(rng);
    return v;
  };
  if (bound) {
    const Bound b = *bound;
    c.project = [b](RVec& v) { v = v.cwiseMax(b.first).cwiseMin(b.second); };
  }
  c.blocks.assign(K, Nc);
  return c;
}

RVec encode_controls(const ControlTable& c) {
  std::size_t n = 0;
  for (const auto& row : c) n += row.size();
  RVec v(static_cast<Eigen::Index>(n));
  Eigen::Index o = 0;
  for (const auto& row : c)
    for (double x : row) v(o++) = x;
  return v;
}

ControlTable decode_controls(const RVec& x, std::size_t K, std::size_t Nc) {
  if (static_cast<std::size_t>(x.size()) != K * Nc) fail(ErrorKind::Dimension, "control vector has the wrong size");
  ControlTable c(K, std::vector<double>(Nc));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < Nc; ++j) c[k][j] = x(static_cast<Eigen::Index>(k * Nc + j));
  return c;
}

ControlResult control_opt(const ControlProblem& prob, const AlgoParams& p, const std::vector<ControlTable>& ctrl0,
                          bool keep_history) {
  require(p.algo == Algorithm::GRAPE || p.algo == Algorithm::AutoGRAPE || p.algo == Algorithm::PSO ||
              p.algo == Algorithm::DE,
          algo_name(p) + " is not available for control optimization");
  const ControlSetup cs(prob.spec, prob.Nc, prob.bound);
  check_objective(prob.obj, cs.spec.dH.size(), p);
  for (const auto& c : ctrl0) cs.check(c);
  const Codec codec = cs.codec();
  const ObjectiveFn objective(prob.obj);
  ControlResult res;
  if (is_gradient(p.algo)) {
    const GradientRoute route = p.algo == Algorithm::AutoGRAPE ? GradientRoute::Pullback : GradientRoute::Direct;
    const RVec init = encode_controls(ctrl0.empty() ? cs.zero() : ctrl0.front());
    res.run = gradient_run(
        codec,
        [&](const RVec& x, RVec& g) {
          const auto dg = dynamics_gradient(cs.with(decode_controls(x, cs.K, cs.Nc)), prob.rho0, prob.obj, route);
          g = encode_controls(dg.ctrl);
          return dg.value;
        },
        p, init, keep_history);
  } else {
    std::vector<RVec> init;
    const std::size_t user = std::min<std::size_t>(ctrl0.size(), std::max(p.p_num, 1) - 1);
    for (std::size_t i = 0; i < user; ++i) init.push_back(encode_controls(ctrl0[i]));
    init.push_back(encode_controls(cs.zero()));
    res.run = run_population(
        codec,
        [&](const RVec& x) { return objective(lindblad_final(cs.with(decode_controls(x, cs.K, cs.Nc)), prob.rho0)); },
        p, init, keep_history);
  }
  res.ctrl = decode_controls(res.run.best, cs.K, cs.Nc);
  res.spec = cs.with(res.ctrl);
  return res;
}

double state_gradient(const StateProblem& prob, const Vec& psi, RVec& grad) {
  check_psi(psi, prob.model.dim());
  return state_value_gradient(StateMap(prob.model), prob.obj, psi.normalized(), grad);
}

StateResult state_opt(const StateProblem& prob, const AlgoParams& p, const std::vector<Vec>& psi0, bool keep_history) {
  const Eigen::Index d = prob.model.dim();
  if (d == 0) fail(ErrorKind::Config, "state optimization needs dynamics or Kraus operators");
  for (const auto& v : psi0) check_psi(v, d);
  StateResult res;
  if (p.algo == Algorithm::RI) {
    require(prob.model.kraus.has_value(), "RI needs a Kraus parameterization");
    require(prob.model.nparams() == 1, "RI supports single-parameter estimation only");
    require(prob.obj.kind == ObjectiveKind::QFIM && prob.obj.ld == LdType::SLD, "RI maximizes the SLD QFI");
    res.run = ri_run(*prob.model.kraus, psi0.empty() ? Vec() : psi0.front(), p, keep_history);
    res.psi = decode_state(res.run.best);
    return res;
  }
  require(p.algo == Algorithm::AD || p.algo == Algorithm::PSO || p.algo == Algorithm::DE || p.algo == Algorithm::NM,
          algo_name(p) + " is not available for state optimization");
  check_objective(prob.obj, prob.model.nparams(), p);
  const StateMap map(prob.model);
  const Codec codec = state_codec(d);
  const ObjectiveFn objective(prob.obj);
  if (p.algo == Algorithm::AD) {
    RVec init;
    if (psi0.empty()) {
      auto rng = candidate_rng(p.seed ^ 0x5bd1e995ULL, 0);
      init = codec.random(rng);
    } else {
      init = encode_state(psi0.front());
    }
    res.run = gradient_run(
        codec,
        [&](const RVec& x, RVec& g) {
          return state_value_gradient(map, prob.obj, decode_state(x), g);
        },
        p, init, keep_history);
  } else {
    std::vector<RVec> init;
    for (const auto& v : psi0) init.push_back(encode_state(v));
    res.run = run_population(
        codec, [&](const RVec& x) { return objective(map.apply(ket_projector(decode_state(x)))); }, p, init,
        keep_history);
  }
  res.psi = decode_state(res.run.best);
  return res;
}

MeasurementType parse_measurement_type(const std::string& s) {
  if (s == "projection") return MeasurementType::Projection;
  if (s == "LC" || s == "lc" || s == "input") return MeasurementType::LinearCombination;
  if (s == "rotation") return MeasurementType::Rotation;
  fail(ErrorKind::Config, "unknown measurement type '" + s + "' (projection, LC, rotation)");
}

const char* to_string(MeasurementType t) {
  switch (t) {
    case MeasurementType::Projection: return "projection";
    case MeasurementType::LinearCombination: return "LC";
    case MeasurementType::Rotation: return "rotation";
  }
  return "?";
}

Mat gram_schmidt(const Mat& c) {
  const auto d = c.rows();
  Mat q = Mat::Zero(d, c.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    Vec v = c.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) v -= q.col(i).dot(v) * q.col(i);
    if (v.norm() < 1e-12) {
      // Degenerate column: take the standard basis vector with the largest remainder.
      double best = -1.0;
      for (Eigen::Index e = 0; e < d; ++e) {
        Vec u = Vec::Unit(d, e);
        for (Eigen::Index i = 0; i < j; ++i) u -= q.col(i).dot(u) * q.col(i);
        if (u.norm() > best) {
          best = u.norm();
          v = u;
        }
      }
    }
    q.col(j) = v / v.norm();
  }
  return q;
}

namespace {

Mat unpack_columns(const RVec& x, Eigen::Index d) {
  Mat c(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) c(i, j) = cplx(x(2 * d * j + i), x(2 * d * j + d + i));
  return c;
}

RVec pack_columns(const Mat& c) {
  const auto d = c.rows();
  RVec x(2 * d * d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) {
      x(2 * d * j + i) = c(i, j).real();
      x(2 * d * j + d + i) = c(i, j).imag();
    }
  return x;
}

void check_measurement_problem(const MeasurementProblem& prob) {
  check_derived(prob.state);
  const auto d = prob.state.dim();
  if (prob.type == MeasurementType::Projection) return;
  if (prob.input.ops.empty()) fail(ErrorKind::Config, "LC and rotation measurements need an input POVM");
  check_povm(prob.input);
  if (prob.input.dim() != d) fail(ErrorKind::Dimension, "input POVM dimension does not match the state");
  if (prob.type == MeasurementType::LinearCombination && (prob.m == 0 || prob.m > prob.input.size()))
    fail(ErrorKind::Domain, "LC output size must be between 1 and the input POVM size");
}

// U = prod_k exp(i s_k lambda_k) and the left/right partial products.
struct Rotation {
  std::vector<Mat> gens, factors;
  Mat U;
  Rotation(const RVec& s, Eigen::Index d) : gens(su_generators(static_cast<int>(d))) {
    U = Mat::Identity(d, d);
    for (std::size_t k = 0; k < gens.size(); ++k) {
      factors.push_back(expm(kI * s(static_cast<Eigen::Index>(k)) * gens[k]));
      U = U * factors.back();
    }
  }
};

// df/dPi_y with df = sum_y Re Tr(G_y dPi_y).
std::vector<Mat> povm_sensitivity(const DerivedState& ds, const Povm& M, const RMat& W, double* value) {
  const std::size_t n = ds.nparams();
  const auto ny = M.size();
  std::vector<double> p(ny);
  std::vector<RVec> dp(ny, RVec::Zero(static_cast<Eigen::Index>(n)));
  RMat F = RMat::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t y = 0; y < ny; ++y) {
    p[y] = (ds.rho * M.ops[y]).trace().real();
    for (std::size_t a = 0; a < n; ++a) dp[y](static_cast<Eigen::Index>(a)) = (ds.drho[a] * M.ops[y]).trace().real();
    if (p[y] >= kEps) F += dp[y] * dp[y].transpose() / p[y];
  }
  const RMat C = scalarization_weights(F, weight_or_identity(W, static_cast<Eigen::Index>(n)), value);
  std::vector<Mat> G(ny, Mat::Zero(ds.dim(), ds.dim()));
  for (std::size_t y = 0; y < ny; ++y) {
    if (p[y] < kEps) continue;
    const RVec cd = 2.0 * C * dp[y] / p[y];
    for (std::size_t a = 0; a < n; ++a) G[y] += cd(static_cast<Eigen::Index>(a)) * ds.drho[a];
    G[y] -= (dp[y].dot(C * dp[y]) / (p[y] * p[y])) * ds.rho;
  }
  return G;
}

}  // namespace

Codec measurement_codec(const MeasurementProblem& prob) {
  check_measurement_problem(prob);
  const auto d = prob.state.dim();
  Codec c;
  switch (prob.type) {
    case MeasurementType::Projection:
      c.dim = static_cast<std::size_t>(2 * d * d);
      c.random = [d](std::mt19937_64& rng) {
        std::normal_distribution<double> nd;
        RVec v(2 * d * d);
        for (auto& x : v) x = nd(rng);
        return v;
      };
      c.project = [d](RVec& v) { v = pack_columns(gram_schmidt(unpack_columns(v, d))); };
      c.blocks.assign(static_cast<std::size_t>(d), static_cast<std::size_t>(2 * d));
      break;
    case MeasurementType::LinearCombination: {
      const std::size_t m = prob.m, n = prob.input.size();
      c.dim = m * n;
      c.random = [m, n](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        RVec v(static_cast<Eigen::Index>(m * n));
        for (auto& x : v) x = u(rng);
        return v;
      };
      c.project = [m, n](RVec& v) {
        v = v.cwiseMax(0.0).cwiseMin(1.0);
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += v(static_cast<Eigen::Index>(i * n + j));
          for (std::size_t i = 0; i < m; ++i) {
            auto& b = v(static_cast<Eigen::Index>(i * n + j));
            b = s > 0.0 ? b / s : 1.0 / static_cast<double>(m);
          }
        }
      };
      c.blocks.assign(m, n);
      break;
    }
    case MeasurementType::Rotation: {
      const std::size_t k = static_cast<std::size_t>(d * d - 1);
      c.dim = k;
      c.random = [k](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.0, 2.0 * M_PI);
        RVec v(static_cast<Eigen::Index>(k));
        for (auto& x : v) x = u(rng);
        return v;
      };
      c.project = [](RVec& v) { v = v.cwiseMax(0.0).cwiseMin(2.0 * M_PI); };
      break;
    }
  }
  return c;
}

Povm decode_measurement(const MeasurementProblem& prob, const RVec& x) {
  const auto d = prob.state.dim();
  Povm M;
  switch (prob.type) {
    case MeasurementType::Projection: {
      if (x.size() != 2 * d * d) fail(ErrorKind::Dimension, "projection candidate has the wrong size");
      const Mat q = gram_schmidt(unpack_columns(x, d));
      for (Eigen::Index j = 0; j < d; ++j) M.ops.push_back(ket_projector(q.col(j)));
      break;
    }
    case MeasurementType::LinearCombination: {
      const std::size_t m = prob.m, n = prob.input.size();
      if (static_cast<std::size_t>(x.size()) != m * n) fail(ErrorKind::Dimension, "LC candidate has the wrong size");
      for (std::size_t i = 0; i < m; ++i) {
        Mat op = Mat::Zero(d, d);
        for (std::size_t j = 0; j < n; ++j) op += x(static_cast<Eigen::Index>(i * n + j)) * prob.input.ops[j];
        M.ops.push_back(op);
      }
      break;
    }
    case MeasurementType::Rotation: {
      if (x.size() != d * d - 1) fail(ErrorKind::Dimension, "rotation candidate has the wrong size");
      const Rotation r(x, d);
      for (const auto& op : prob.input.ops) M.ops.push_back(r.U * op * r.U.adjoint());
      break;
    }
  }
  return M;
}

double measurement_gradient(const MeasurementProblem& prob, const RVec& x, RVec& grad) {
  require(prob.type != MeasurementType::Projection, "gradient search is not available for projective measurements");
  const Povm M = decode_measurement(prob, x);
  double value = 0.0;
  const auto G = povm_sensitivity(prob.state, M, prob.W, &value);
  grad = RVec::Zero(x.size());
  if (prob.type == MeasurementType::LinearCombination) {
    const std::size_t n = prob.input.size();
    for (std::size_t i = 0; i < prob.m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        grad(static_cast<Eigen::Index>(i * n + j)) = (G[i] * prob.input.ops[j]).trace().real();
    return value;
  }
  const auto d = prob.state.dim();
  const Rotation r(x, d);
  const std::size_t K = r.gens.size();
  // dU/ds_k = (E_1..E_k) (i lambda_k) (E_{k+1}..E_K); df = sum_y 2 Re Tr(G_y dU M_y U^†).
  Mat S = Mat::Zero(d, d);
  for (std::size_t y = 0; y < M.size(); ++y) S += prob.input.ops[y] * r.U.adjoint() * G[y];
  std::vector<Mat> right(K + 1, Mat::Identity(d, d));
  for (std::size_t k = K; k-- > 0;) right[k] = r.factors[k] * right[k + 1];
  Mat left = Mat::Identity(d, d);
  for (std::size_t k = 0; k < K; ++k) {
    left = left * r.factors[k];
    const Mat dU = left * (kI * r.gens[k]) * right[k + 1];
    grad(static_cast<Eigen::Index>(k)) = 2.0 * (dU * S).trace().real();
  }
  return value;
}

MeasurementResult measurement_opt(const MeasurementProblem& prob, const AlgoParams& p, const std::vector<RVec>& init,
                                  bool keep_history) {
  require(p.algo == Algorithm::AD || p.algo == Algorithm::PSO || p.algo == Algorithm::DE,
          algo_name(p) + " is not available for measurement optimization");
  if (p.algo == Algorithm::AD)
    require(prob.type != MeasurementType::Projection, "AD is only available for LC and rotation measurements");
  const Codec codec = measurement_codec(prob);
  for (const auto& x : init)
    if (static_cast<std::size_t>(x.size()) != codec.dim) fail(ErrorKind::Dimension, "initial guess has wrong size");
  if (prob.W.size() > 0) check_weight(prob.W, static_cast<Eigen::Index>(prob.state.nparams()));
  MeasurementResult res;
  if (p.algo == Algorithm::AD) {
    RVec x0;
    if (init.empty()) {
      auto rng = candidate_rng(p.seed ^ 0x5bd1e995ULL, 0);
      x0 = codec.random(rng);
    } else {
      x0 = init.front();
    }
    res.run = gradient_run(codec, [&](const RVec& x, RVec& g) { return measurement_gradient(prob, x, g); }, p, x0,
                           keep_history);
  } else {
    ObjectiveSpec obj;
    obj.kind = ObjectiveKind::CFIM;
    obj.W = prob.W;
    res.run = run_population(
        codec,
        [&](const RVec& x) {
          ObjectiveSpec o = obj;
          o.M = decode_measurement(prob, x);
          return objective_value(prob.state, o);
        },
        p, init, keep_history);
  }
  res.M = decode_measurement(prob, res.run.best);
  return res;
}

CompKind parse_comp_kind(const std::string& s) {
  if (s == "SM") return CompKind::SM;
  if (s == "SC") return CompKind::SC;
  if (s == "CM") return CompKind::CM;
  if (s == "SCM") return CompKind::SCM;
  fail(ErrorKind::Config, "unknown comprehensive kind '" + s + "' (SM, SC, CM, SCM)");
}

const char* to_string(CompKind k) {
  switch (k) {
    case CompKind::SM: return "SM";
    case CompKind::SC: return "SC";
    case CompKind::CM: return "CM";
    case CompKind::SCM: return "SCM";
  }
  return "?";
}

ComprehensiveResult comprehensive_opt(const ComprehensiveProblem& prob, const AlgoParams& p, bool keep_history) {
  const CompKind kind = prob.kind;
  const bool has_state = kind != CompKind::CM, has_ctrl = kind != CompKind::SM, has_meas = kind != CompKind::SC;
  if (prob.model.kraus && !prob.model.dynamics)
    require(kind == CompKind::SM, "only SM is available for a Kraus parameterization");
  if (!prob.model.dynamics && !prob.model.kraus) fail(ErrorKind::Config, "comprehensive optimization needs a model");
  require(p.algo == Algorithm::PSO || p.algo == Algorithm::DE || p.algo == Algorithm::AD,
          algo_name(p) + " is not available for comprehensive optimization");
  if (p.algo == Algorithm::AD) require(kind == CompKind::SC, "AD is only available for SC");
  const Eigen::Index d = prob.model.dim();
  const std::size_t n = prob.model.nparams();
  ObjectiveSpec obj = prob.obj;
  if (has_meas) {
    obj = ObjectiveSpec{};
    obj.kind = ObjectiveKind::CFIM;
    obj.W = prob.obj.W;
  }
  check_objective(obj, n, p);
  if (kind == CompKind::CM) {
    if (prob.rho0.size() == 0) fail(ErrorKind::Config, "CM needs a fixed probe state");
    check_state(prob.rho0, "rho0");
    if (prob.rho0.rows() != d) fail(ErrorKind::Dimension, "rho0 dimension does not match the model");
  }
  for (const auto& v : prob.psi0) check_psi(v, d);

  std::optional<ControlSetup> cs;
  if (has_ctrl) cs.emplace(*prob.model.dynamics, prob.Nc, prob.bound);
  std::optional<StateMap> map;
  if (!has_ctrl) map.emplace(prob.model);

  MeasurementProblem mp;  // codec template; state filled per evaluation
  mp.type = MeasurementType::Projection;
  mp.W = obj.W;
  mp.state.rho = Mat::Identity(d, d) / static_cast<double>(d);
  mp.state.drho.assign(n, Mat::Zero(d, d));

  Joint joint;
  int is = -1, ic = -1, im = -1;
  if (has_state) {
    is = static_cast<int>(joint.parts.size());
    joint.add(state_codec(d));
  }
  if (has_ctrl) {
    ic = static_cast<int>(joint.parts.size());
    joint.add(cs->codec());
  }
  if (has_meas) {
    im = static_cast<int>(joint.parts.size());
    joint.add(measurement_codec(mp));
  }
  const Codec codec = joint.codec();

  auto rho_of = [&](const RVec& x) {
    return has_state ? ket_projector(decode_state(joint.segment(x, is))) : Mat(prob.rho0);
  };
  auto final_state = [&](const RVec& x) {
    const Mat rho0 = rho_of(x);
    if (!has_ctrl) return map->apply(rho0);
    return lindblad_final(cs->with(decode_controls(joint.segment(x, ic), cs->K, cs->Nc)), rho0);
  };
  const ObjectiveFn objective(obj);
  auto evaluate = [&](const RVec& x) {
    const DerivedState ds = final_state(x);
    if (!has_meas) return objective(ds);
    ObjectiveSpec o = obj;
    o.M = decode_measurement(mp, joint.segment(x, im));
    return objective_value(ds, o);
  };

  // Seeds: given states, zero controls, and random measurements.
  auto seed_candidate = [&](std::size_t i) {
    auto rng = candidate_rng(p.seed ^ 0x2545f491ULL, i);
    RVec x = codec.random(rng);
    if (has_state && i < prob.psi0.size())
      x.segment(static_cast<Eigen::Index>(joint.offsets[is]), 2 * d) = encode_state(prob.psi0[i]);
    if (has_ctrl && i == 0)
      x.segment(static_cast<Eigen::Index>(joint.offsets[ic]), static_cast<Eigen::Index>(cs->K * cs->Nc)) =
          encode_controls(cs->zero());
    return x;
  };

  ComprehensiveResult res;
  if (p.algo == Algorithm::AD) {
    const auto route = GradientRoute::Direct;
    const RVec init = seed_candidate(0);
    res.run = gradient_run(
        codec,
        [&](const RVec& x, RVec& g) {
          const Vec psi = decode_state(joint.segment(x, is));
          const auto dg = dynamics_gradient(cs->with(decode_controls(joint.segment(x, ic), cs->K, cs->Nc)),
                                            ket_projector(psi), obj, route);
          g.segment(static_cast<Eigen::Index>(joint.offsets[is]), 2 * d) = coefficient_gradient(dg.rho0, psi);
          g.segment(static_cast<Eigen::Index>(joint.offsets[ic]), static_cast<Eigen::Index>(cs->K * cs->Nc)) =
              encode_controls(dg.ctrl);
          return dg.value;
        },
        p, init, keep_history);
  } else {
    std::vector<RVec> init;
    const std::size_t seeds = std::max<std::size_t>(1, prob.psi0.size());
    for (std::size_t i = 0; i < std::min<std::size_t>(seeds, static_cast<std::size_t>(std::max(p.p_num, 1))); ++i)
      init.push_back(seed_candidate(i));
    res.run = run_population(codec, evaluate, p, init, keep_history);
  }
  const RVec& best = res.run.best;
  if (has_state) res.psi = decode_state(joint.segment(best, is));
  if (has_ctrl) {
    res.ctrl = decode_controls(joint.segment(best, ic), cs->K, cs->Nc);
    res.spec = cs->with(res.ctrl);
  } else if (prob.model.dynamics) {
    res.spec = normalize_spec(*prob.model.dynamics);
  }
  if (has_meas) res.M = decode_measurement(mp, joint.segment(best, im));
  return res;
}

SearchMode parse_search_mode(const std::string& s) {
  if (s == "binary") return SearchMode::Binary;
  if (s == "forward") return SearchMode::Forward;
  fail(ErrorKind::Config, "unknown search mode '" + s + "' (binary, forward)");
}

MinTimeResult mintime(const ControlProblem& prob, double f_target, SearchMode mode, const AlgoParams& p) {
  const std::size_t N = prob.spec.steps();
  if (N == 0) fail(ErrorKind::Domain, "tspan needs at least two points");
  if (prob.Nc != 0 && prob.Nc != N) fail(ErrorKind::Config, "minimum-time search works with full-Nc controls only");
  MinTimeResult out;
  std::map<std::size_t, ControlResult> cache;
  auto probe = [&](std::size_t n) -> const ControlResult& {
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    ControlProblem sub = prob;
    sub.spec.tspan.assign(prob.spec.tspan.begin(), prob.spec.tspan.begin() + static_cast<std::ptrdiff_t>(n) + 1);
    if (sub.spec.H0.size() > 1) sub.spec.H0.resize(n + 1);
    sub.Nc = 0;
    ControlResult r = control_opt(sub, p);
    out.probes.emplace_back(n, r.run.best_value);
    return cache.emplace(n, std::move(r)).first->second;
  };
  auto reached = [&](std::size_t n) { return probe(n).run.best_value >= f_target; };
  std::size_t hit = 0;
  if (mode == SearchMode::Forward) {
    for (std::size_t n = 1; n <= N && hit == 0; ++n)
      if (reached(n)) hit = n;
  } else if (reached(N)) {
    std::size_t lo = 0, hi = N;  // invariant: hi reaches, lo does not (lo = 0 is the empty horizon)
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (reached(mid))
        hi = mid;
      else
        lo = mid;
    }
    hit = hi;
  }
  if (hit == 0) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pr : out.probes) best = std::max(best, pr.second);
    std::ostringstream os;
    os << "target " << f_target << " is not reached within the time span (best value " << best << ")";
    fail(ErrorKind::NotFound, os.str());
  }
  const ControlResult& r = probe(hit);
  out.steps = hit;
  out.t = r.spec.tspan.back();
  out.value = r.run.best_value;
  out.tspan = r.spec.tspan;
  out.ctrl = r.ctrl;
  return out;
}

}  // namespace qmetro
