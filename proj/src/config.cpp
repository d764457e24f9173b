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

#include "qmetro/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qmetro/presets.hpp"

namespace qmetro {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  fail(ErrorKind::Config, (path.empty() ? std::string("<root>") : path) + ": " + msg);
}

std::string sub(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string idx(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Re-raises library validation failures under a config key path.
template <typename F>
auto at_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    bad(path, e.what());
  }
}

void allow(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; });
    if (!ok) bad(sub(path, it.key()), "unknown key");
  }
}

const json* opt(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

double num(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) bad(path, "must be finite");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = num(j, path);
  if (!(v > 0.0)) bad(path, "must be positive");
  return v;
}

long long integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  return j.get<long long>();
}

std::size_t count(const json& j, const std::string& path) {
  const long long v = integer(j, path);
  if (v < 0) bad(path, "must be non-negative");
  return static_cast<std::size_t>(v);
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) bad(path, "expected true or false");
  return j.get<bool>();
}

std::string str(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

const json& array(const json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected an array");
  return j;
}

std::vector<double> numbers(const json& j, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) out.push_back(num(j[i], idx(path, i)));
  return out;
}

cplx entry(const json& j, const std::string& path) {
  if (j.is_number()) return {num(j, path), 0.0};
  if (j.is_array() && j.size() == 2) return {num(j[0], idx(path, 0)), num(j[1], idx(path, 1))};
  bad(path, "expected a number or a [re, im] pair");
}

Mat matrix(const json& j, const std::string& path) {
  if (array(j, path).empty()) bad(path, "empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(array(j[0], idx(path, 0)).size());
  if (cols == 0) bad(idx(path, 0), "empty row");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::string rp = idx(path, static_cast<std::size_t>(r));
    const json& row = array(j[static_cast<std::size_t>(r)], rp);
    if (static_cast<Eigen::Index>(row.size()) != cols) bad(rp, "ragged matrix row");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = entry(row[static_cast<std::size_t>(c)], idx(rp, static_cast<std::size_t>(c)));
  }
  return m;
}

RMat real_matrix(const json& j, const std::string& path) {
  const Mat m = matrix(j, path);
  if (m.imag().cwiseAbs().maxCoeff() > 0.0) bad(path, "must be real");
  return m.real();
}

Vec vector(const json& j, const std::string& path) {
  if (array(j, path).empty()) bad(path, "empty vector");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = entry(j[i], idx(path, i));
  return v;
}

std::vector<Mat> matrices(const json& j, const std::string& path) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) out.push_back(matrix(j[i], idx(path, i)));
  return out;
}

void need_dim(const Mat& m, Eigen::Index d, const std::string& path) {
  if (m.rows() != d || m.cols() != d)
    bad(path, "expected a " + std::to_string(d) + "x" + std::to_string(d) + " matrix, got " + std::to_string(m.rows()) +
                  "x" + std::to_string(m.cols()));
}

void need_hermitian(const Mat& m, const std::string& path) {
  if (m.rows() != m.cols()) bad(path, "must be square");
  if (!is_hermitian(m, 1e-10)) bad(path, "must be Hermitian");
}

void check_tspan(const std::vector<double>& t, const std::string& path) {
  if (t.size() < 2) bad(path, "needs at least two time points");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) bad(idx(path, i), "tspan must be strictly increasing");
}

double constant(const Constants& c, const char* key, double dflt) {
  auto it = c.find(key);
  return it == c.end() ? dflt : it->second;
}

Preset build_preset(const std::string& id, const Constants& c, double T, std::size_t steps, const std::string& path) {
  static const std::map<std::string, std::set<std::string>> known{
      {"qubit_unitary", {"omega"}},
      {"me_spon", {"omega", "gamma_plus", "gamma_minus"}},
      {"me_spon_ctrl", {"omega", "gamma_plus", "gamma_minus"}},
      {"two_qubit_xx", {}},
      {"nv_center", {"controls"}},
      {"lmg", {"n_spins", "two_params"}},
  };
  auto it = known.find(id);
  if (it == known.end()) bad(sub(path, "preset"), "unknown preset '" + id + "'");
  for (const auto& kv : c)
    if (!it->second.count(kv.first)) bad(sub(sub(path, "constants"), kv.first), "unknown key");
  return at_path(sub(path, "preset"), [&] {
    if (id == "qubit_unitary") return preset_qubit_unitary(T, steps, constant(c, "omega", 1.0));
    if (id == "me_spon" || id == "me_spon_ctrl")
      return preset_me_spon(T, steps, constant(c, "gamma_plus", 0.0), constant(c, "gamma_minus", 0.1),
                            id == "me_spon_ctrl", constant(c, "omega", 1.0));
    if (id == "nv_center") return preset_nv_center(T, steps, constant(c, "controls", 1.0) != 0.0);
    if (id == "lmg")
      return preset_lmg(static_cast<int>(constant(c, "n_spins", 4.0)), T, steps, constant(c, "two_params", 0.0) != 0.0);
    return preset_two_qubit_xx(T, steps);
  });
}

Constants read_constants(const json& j, const std::string& path) {
  if (!j.is_object()) bad(path, "expected an object");
  Constants c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string p = sub(path, it.key());
    c[it.key()] = it->is_boolean() ? (it->get<bool>() ? 1.0 : 0.0) : num(*it, p);
  }
  return c;
}

std::vector<double> read_tspan(const json* dyn, bool required) {
  if (!dyn) {
    if (required) bad("dynamics", "missing section");
    return {};
  }
  if (const json* t = opt(*dyn, "tspan")) {
    if (opt(*dyn, "T") || opt(*dyn, "steps")) bad("dynamics.tspan", "give either tspan or T and steps");
    auto ts = numbers(*t, "dynamics.tspan");
    check_tspan(ts, "dynamics.tspan");
    return ts;
  }
  const json* T = opt(*dyn, "T");
  const json* n = opt(*dyn, "steps");
  if (!T || !n) {
    if (required) bad("dynamics", "needs tspan, or T and steps");
    return {};
  }
  const double tv = positive(*T, "dynamics.T");
  const std::size_t nv = count(*n, "dynamics.steps");
  if (nv == 0) bad("dynamics.steps", "must be positive");
  return linspace(0.0, tv, nv + 1);
}

std::vector<Decay> read_decay(const json& j, const std::string& path) {
  std::vector<Decay> out;
  for (std::size_t i = 0; i < array(j, path).size(); ++i) {
    const std::string p = idx(path, i);
    allow(j[i], p, {"op", "rate"});
    if (!opt(j[i], "op") || !opt(j[i], "rate")) bad(p, "needs op and rate");
    const double rate = num(j[i]["rate"], sub(p, "rate"));
    if (rate < 0.0) bad(sub(p, "rate"), "must be non-negative");
    out.push_back({matrix(j[i]["op"], sub(p, "op")), rate});
  }
  return out;
}

bool grid_task(TaskKind t) { return t == TaskKind::Bayes || t == TaskKind::Adapt; }

void read_model(const json& root, ScenarioConfig& cfg) {
  const json* mj = opt(root, "model");
  if (!mj) bad("model", "missing section");
  allow(*mj, "model", {"preset", "template", "constants", "H0", "dH", "Hc", "decay", "rho0", "psi0", "kraus"});
  const json* dyn = opt(root, "dynamics");
  if (dyn) allow(*dyn, "dynamics", {"tspan", "T", "steps", "ctrl", "Nc", "bound"});
  ModelConfig& m = cfg.model;
  const int sources = (opt(*mj, "preset") ? 1 : 0) + (opt(*mj, "template") ? 1 : 0) + (opt(*mj, "H0") ? 1 : 0) +
                      (opt(*mj, "kraus") ? 1 : 0);
  if (sources != 1) bad("model", "give exactly one of preset, template, H0 or kraus");
  if (const json* c = opt(*mj, "constants")) m.constants = read_constants(*c, "model.constants");
  if (opt(*mj, "constants") && !opt(*mj, "preset") && !opt(*mj, "template"))
    bad("model.constants", "only used with a preset or template");

  Povm preset_M;
  RMat preset_W;
  if (const json* p = opt(*mj, "preset")) {
    m.preset = str(*p, "model.preset");
    const auto ts = read_tspan(dyn, true);
    Preset pr = build_preset(m.preset, m.constants, ts.back(), ts.size() - 1, "model");
    pr.spec.tspan = ts;
    for (const char* k : {"H0", "dH", "Hc", "decay"})
      if (opt(*mj, k)) bad(sub("model", k), "cannot be combined with a preset");
    m.spec = pr.spec;
    m.rho0 = pr.rho0;
    preset_M = pr.M;
    preset_W = pr.W;
  } else if (const json* t = opt(*mj, "template")) {
    m.template_id = str(*t, "model.template");
    if (!grid_task(cfg.task)) bad("model.template", "templates are used by the bayes and adapt tasks");
    DynamicsSpec s;
    s.tspan = read_tspan(dyn, true);
    if (const json* d = opt(*mj, "decay")) s.decay = read_decay(*d, "model.decay");
    for (const char* k : {"H0", "dH", "Hc"})
      if (opt(*mj, k)) bad(sub("model", k), "cannot be combined with a template");
    m.spec = s;
  } else if (const json* h = opt(*mj, "H0")) {
    DynamicsSpec s;
    s.tspan = read_tspan(dyn, true);
    if (h->is_array() && !h->empty() && h->front().is_array() && !h->front().empty() && h->front().front().is_array() &&
        !h->front().front().empty() && h->front().front().front().is_array()) {
      s.H0 = matrices(*h, "model.H0");
      if (s.H0.size() != s.tspan.size()) bad("model.H0", "time-dependent H0 needs one matrix per tspan entry");
    } else {
      s.H0 = {matrix(*h, "model.H0")};
    }
    for (std::size_t i = 0; i < s.H0.size(); ++i) need_hermitian(s.H0[i], s.H0.size() == 1 ? "model.H0" : idx("model.H0", i));
    if (!opt(*mj, "dH")) bad("model.dH", "missing");
    s.dH = matrices((*mj)["dH"], "model.dH");
    if (s.dH.empty()) bad("model.dH", "needs at least one parameter");
    if (const json* c = opt(*mj, "Hc")) s.Hc = matrices(*c, "model.Hc");
    if (const json* d = opt(*mj, "decay")) s.decay = read_decay(*d, "model.decay");
    const auto d = s.H0.front().rows();
    for (std::size_t i = 0; i < s.dH.size(); ++i) {
      need_dim(s.dH[i], d, idx("model.dH", i));
      need_hermitian(s.dH[i], idx("model.dH", i));
    }
    for (std::size_t i = 0; i < s.Hc.size(); ++i) {
      need_dim(s.Hc[i], d, idx("model.Hc", i));
      need_hermitian(s.Hc[i], idx("model.Hc", i));
    }
    for (std::size_t i = 0; i < s.decay.size(); ++i) need_dim(s.decay[i].op, d, sub(idx("model.decay", i), "op"));
    if (!s.Hc.empty()) s.ctrl.assign(s.Hc.size(), std::vector<double>(s.steps(), 0.0));
    m.spec = s;
  } else {
    const json& kj = (*mj)["kraus"];
    allow(kj, "model.kraus", {"K", "dK"});
    if (!opt(kj, "K") || !opt(kj, "dK")) bad("model.kraus", "needs K and dK");
    KrausChannel ch;
    ch.K = matrices(kj["K"], "model.kraus.K");
    if (ch.K.empty()) bad("model.kraus.K", "needs at least one operator");
    const json& dk = array(kj["dK"], "model.kraus.dK");
    if (dk.size() != ch.K.size()) bad("model.kraus.dK", "needs one entry per Kraus operator");
    for (std::size_t i = 0; i < dk.size(); ++i) ch.dK.push_back(matrices(dk[i], idx("model.kraus.dK", i)));
    for (std::size_t i = 0; i < ch.K.size(); ++i) {
      if (ch.K[i].rows() != ch.K[0].rows() || ch.K[i].cols() != ch.K[0].cols()) bad(idx("model.kraus.K", i), "shape mismatch");
      if (ch.dK[i].size() != ch.dK[0].size()) bad(idx("model.kraus.dK", i), "parameter count mismatch");
      for (std::size_t a = 0; a < ch.dK[i].size(); ++a)
        if (ch.dK[i][a].rows() != ch.K[0].rows() || ch.dK[i][a].cols() != ch.K[0].cols())
          bad(idx(idx("model.kraus.dK", i), a), "shape mismatch");
    }
    if (ch.dK[0].empty()) bad("model.kraus.dK", "needs at least one parameter");
    at_path("model.kraus", [&] { check_channel(ch); });
    if (dyn) bad("dynamics", "not used with a Kraus model");
    m.kraus = ch;
  }

  if (!m.template_id.empty()) {
    const ParamModel pm = at_path("model.template", [&] {
      return eval_template(m.template_id, m.constants, std::vector<double>(template_params(m.template_id), 0.0));
    });
    m.dim = pm.H.rows();
    m.nparams = pm.dH.size();
  } else if (m.spec) {
    m.dim = m.spec->dim();
    m.nparams = m.spec->dH.size();
  } else {
    m.dim = m.kraus->K.front().cols();
    m.nparams = m.kraus->dK.front().size();
  }
  for (std::size_t i = 0; m.spec && i < m.spec->decay.size(); ++i)
    need_dim(m.spec->decay[i].op, m.dim, sub(idx("model.decay", i), "op"));

  if (const json* r = opt(*mj, "rho0")) {
    if (opt(*mj, "psi0") && grid_task(cfg.task)) bad("model", "give rho0 or psi0, not both");
    m.rho0 = matrix(*r, "model.rho0");
    need_dim(m.rho0, m.dim, "model.rho0");
    at_path("model.rho0", [&] { check_state(m.rho0, "rho0"); });
  }
  if (const json* p = opt(*mj, "psi0")) {
    Vec v = vector(*p, "model.psi0");
    if (v.size() != m.dim) bad("model.psi0", "expected " + std::to_string(m.dim) + " entries");
    if (v.norm() == 0.0) bad("model.psi0", "zero vector");
    v /= v.norm();
    m.psi0 = v;
    if (m.rho0.size() == 0) m.rho0 = ket_projector(v);
  }

  // Controls.
  if (dyn && m.spec) {
    if (const json* c = opt(*dyn, "ctrl")) {
      const json& cj = array(*c, "dynamics.ctrl");
      if (cj.size() != m.spec->Hc.size())
        bad("dynamics.ctrl", "expected " + std::to_string(m.spec->Hc.size()) + " rows, one per control Hamiltonian");
      ControlTable t;
      for (std::size_t k = 0; k < cj.size(); ++k) {
        t.push_back(numbers(cj[k], idx("dynamics.ctrl", k)));
        if (t.back().empty() || t.back().size() != t.front().size()) bad(idx("dynamics.ctrl", k), "rows need equal, non-zero length");
      }
      if (!t.empty() && m.spec->steps() % t.front().size() != 0 && cfg.task == TaskKind::Bounds)
        bad("dynamics.ctrl", "amplitude count must divide the step count");
      m.spec->ctrl = t;
      cfg.ctrl0 = t;
    }
    if (const json* n = opt(*dyn, "Nc")) cfg.Nc = count(*n, "dynamics.Nc");
    if (const json* b = opt(*dyn, "bound")) {
      const auto v = numbers(*b, "dynamics.bound");
      if (v.size() != 2 || !(v[0] < v[1])) bad("dynamics.bound", "expected [lower, upper] with lower < upper");
      cfg.bound = Bound{v[0], v[1]};
    }
  }

  // Objective.
  cfg.obj.M = preset_M.ops.empty() ? Povm{} : preset_M;
  cfg.obj.W = preset_W;
  if (const json* o = opt(root, "objective")) {
    allow(*o, "objective", {"kind", "W", "ld_type", "M"});
    if (const json* k = opt(*o, "kind"))
      cfg.obj.kind = at_path("objective.kind", [&] { return parse_objective_kind(str(*k, "objective.kind")); });
    if (const json* l = opt(*o, "ld_type"))
      cfg.obj.ld = at_path("objective.ld_type", [&] { return parse_ld_type(str(*l, "objective.ld_type")); });
    if (const json* w = opt(*o, "W")) cfg.obj.W = real_matrix(*w, "objective.W");
    if (const json* mm = opt(*o, "M")) {
      if (mm->is_string()) {
        if (mm->get<std::string>() != "sic") bad("objective.M", "expected a list of matrices or \"sic\"");
        cfg.obj.M = {};
      } else {
        cfg.obj.M = Povm{matrices(*mm, "objective.M")};
        for (std::size_t i = 0; i < cfg.obj.M.ops.size(); ++i) need_dim(cfg.obj.M.ops[i], m.dim, idx("objective.M", i));
        at_path("objective.M", [&] { check_povm(cfg.obj.M); });
      }
    }
  }
  if (cfg.obj.W.size() != 0) {
    const auto n = static_cast<Eigen::Index>(m.nparams);
    if (cfg.obj.W.rows() != n || cfg.obj.W.cols() != n)
      bad("objective.W", "expected a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
    if ((cfg.obj.W - cfg.obj.W.transpose()).cwiseAbs().maxCoeff() > 1e-10) bad("objective.W", "must be symmetric");
    Eigen::SelfAdjointEigenSolver<RMat> es(cfg.obj.W, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) bad("objective.W", "not positive semidefinite");
  }
}

Task engine_task(TaskKind t) {
  switch (t) {
    case TaskKind::Sopt: return Task::State;
    case TaskKind::Mopt:
    case TaskKind::Adapt: return Task::Measurement;
    case TaskKind::Compopt: return Task::Comprehensive;
    default: return Task::Control;
  }
}

Algorithm default_algorithm(TaskKind t) {
  switch (t) {
    case TaskKind::Sopt: return Algorithm::AD;
    case TaskKind::Mopt:
    case TaskKind::Compopt:
    case TaskKind::Adapt: return Algorithm::DE;
    default: return Algorithm::AutoGRAPE;
  }
}

void read_algorithm(const json& root, ScenarioConfig& cfg) {
  Algorithm a = default_algorithm(cfg.task);
  const json* aj = opt(root, "algorithm");
  if (aj) {
    allow(*aj, "algorithm", {"name", "p_num", "max_episode", "reset_period", "c0", "c1", "c2", "c", "cr", "ar", "ae", "ac",
                              "as0", "adam", "epsilon", "beta1", "beta2", "seed", "threads"});
    if (const json* n = opt(*aj, "name"))
      a = at_path("algorithm.name", [&] { return parse_algorithm(str(*n, "algorithm.name")); });
  }
  AlgoParams p = default_params(a, engine_task(cfg.task));
  if (aj) {
    const auto pos_int = [&](const char* k, int& dst) {
      if (const json* v = opt(*aj, k)) {
        const std::size_t c = count(*v, sub("algorithm", k));
        if (c == 0) bad(sub("algorithm", k), "must be positive");
        dst = static_cast<int>(c);
      }
    };
    const auto real = [&](const char* k, double& dst) {
      if (const json* v = opt(*aj, k)) dst = num(*v, sub("algorithm", k));
    };
    pos_int("p_num", p.p_num);
    pos_int("max_episode", p.max_episode);
    pos_int("threads", p.threads);
    if (const json* v = opt(*aj, "reset_period")) p.reset_period = static_cast<int>(count(*v, "algorithm.reset_period"));
    for (auto [k, dst] : std::initializer_list<std::pair<const char*, double*>>{
             {"c0", &p.c0}, {"c1", &p.c1}, {"c2", &p.c2}, {"c", &p.c}, {"cr", &p.cr}, {"ar", &p.ar}, {"ae", &p.ae},
             {"ac", &p.ac}, {"as0", &p.as0}, {"epsilon", &p.epsilon}, {"beta1", &p.beta1}, {"beta2", &p.beta2}})
      real(k, *dst);
    if (const json* v = opt(*aj, "adam")) p.adam = boolean(*v, "algorithm.adam");
    if (const json* v = opt(*aj, "seed")) p.seed = static_cast<std::uint64_t>(count(*v, "algorithm.seed"));
    if (p.cr < 0.0 || p.cr > 1.0) bad("algorithm.cr", "must lie in [0, 1]");
  }
  cfg.algo = p;
}

void read_grid(const json& root, ScenarioConfig& cfg) {
  const json* bj = opt(root, "bayes");
  if (!grid_task(cfg.task)) {
    if (bj) bad("bayes", "only used by the bayes and adapt tasks");
    return;
  }
  if (cfg.model.template_id.empty()) bad("model.template", "the bayes and adapt tasks need a parametric template");
  if (!bj) bad("bayes", "missing section");
  allow(*bj, "bayes", {"axes", "prior", "x_true", "rounds", "estimator", "outcomes"});
  BayesConfig& b = cfg.bayes;
  if (!opt(*bj, "axes")) bad("bayes.axes", "missing");
  const json& ax = array((*bj)["axes"], "bayes.axes");
  if (ax.size() != cfg.model.nparams)
    bad("bayes.axes", "expected " + std::to_string(cfg.model.nparams) + " axes, one per parameter");
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const std::string p = idx("bayes.axes", i);
    if (ax[i].is_object()) {
      allow(ax[i], p, {"lo", "hi", "n"});
      if (!opt(ax[i], "lo") || !opt(ax[i], "hi") || !opt(ax[i], "n")) bad(p, "needs lo, hi and n");
      const double lo = num(ax[i]["lo"], sub(p, "lo")), hi = num(ax[i]["hi"], sub(p, "hi"));
      const std::size_t n = count(ax[i]["n"], sub(p, "n"));
      if (n == 0) bad(sub(p, "n"), "must be positive");
      if (n > 1 && !(hi > lo)) bad(p, "hi must exceed lo");
      b.axes.push_back(linspace(lo, hi, n));
    } else {
      b.axes.push_back(numbers(ax[i], p));
      if (b.axes.back().empty()) bad(p, "empty axis");
      for (std::size_t k = 1; k < b.axes.back().size(); ++k)
        if (!(b.axes.back()[k] > b.axes.back()[k - 1])) bad(idx(p, k), "axis must be strictly increasing");
    }
  }
  if (const json* pj = opt(*bj, "prior")) {
    allow(*pj, "bayes.prior", {"kind", "mu", "eta"});
    const std::string k = pj->contains("kind") ? str((*pj)["kind"], "bayes.prior.kind") : "uniform";
    if (k == "uniform") {
      b.prior = PriorKind::Uniform;
    } else if (k == "gaussian") {
      b.prior = PriorKind::Gaussian;
      if (b.axes.size() != 1) bad("bayes.prior.kind", "the Gaussian prior is single-parameter");
      if (const json* v = opt(*pj, "mu")) b.mu = num(*v, "bayes.prior.mu");
      if (const json* v = opt(*pj, "eta")) b.eta = positive(*v, "bayes.prior.eta");
    } else {
      bad("bayes.prior.kind", "expected \"uniform\" or \"gaussian\"");
    }
  }
  if (const json* v = opt(*bj, "x_true")) {
    b.x_true = numbers(*v, "bayes.x_true");
    if (b.x_true.size() != cfg.model.nparams) bad("bayes.x_true", "expected one entry per parameter");
  }
  if (const json* v = opt(*bj, "rounds")) b.rounds = count(*v, "bayes.rounds");
  if (const json* v = opt(*bj, "estimator")) {
    const std::string e = str(*v, "bayes.estimator");
    if (e == "MAP") b.est = Estimator::MAP;
    else if (e == "mean") b.est = Estimator::Mean;
    else bad("bayes.estimator", "expected \"MAP\" or \"mean\"");
  }
  if (const json* v = opt(*bj, "outcomes")) {
    for (std::size_t i = 0; i < array(*v, "bayes.outcomes").size(); ++i) {
      const long long y = integer((*v)[i], idx("bayes.outcomes", i));
      if (y < 0) bad(idx("bayes.outcomes", i), "outcome indices are non-negative");
      b.outcomes.push_back(static_cast<int>(y));
    }
  }
  if (cfg.model.rho0.size() == 0) bad("model.rho0", "grid tasks need rho0 or psi0");
  if (cfg.task == TaskKind::Bayes && b.outcomes.empty() && b.x_true.empty())
    bad("bayes", "needs outcomes or x_true to simulate them");
}

void require_rho0(const ScenarioConfig& cfg) {
  if (cfg.model.rho0.size() == 0) bad("model.rho0", "this task needs an initial state");
}

void read_task_sections(const json& root, ScenarioConfig& cfg) {
  const TaskKind t = cfg.task;
  const auto only = [&](const char* key, std::initializer_list<TaskKind> tasks) {
    if (opt(root, key) && std::find(tasks.begin(), tasks.end(), t) == tasks.end())
      bad(key, std::string("not used by the ") + to_string(t) + " task");
  };
  only("measurement", {TaskKind::Mopt});
  only("comprehensive", {TaskKind::Compopt});
  only("mintime", {TaskKind::Mintime});
  only("adapt", {TaskKind::Adapt});
  if (opt(root, "dynamics") && cfg.model.kraus) bad("dynamics", "not used with a Kraus model");

  if (const json* mj = opt(root, "measurement")) {
    allow(*mj, "measurement", {"type", "input", "m"});
    if (const json* v = opt(*mj, "type"))
      cfg.mtype = at_path("measurement.type", [&] { return parse_measurement_type(str(*v, "measurement.type")); });
    if (const json* v = opt(*mj, "input")) {
      cfg.minput = Povm{matrices(*v, "measurement.input")};
      for (std::size_t i = 0; i < cfg.minput.ops.size(); ++i)
        need_dim(cfg.minput.ops[i], cfg.model.dim, idx("measurement.input", i));
      at_path("measurement.input", [&] { check_povm(cfg.minput); });
    }
    if (const json* v = opt(*mj, "m")) cfg.m = count(*v, "measurement.m");
  }
  if (t == TaskKind::Mopt && cfg.mtype != MeasurementType::Projection) {
    if (cfg.minput.ops.empty()) bad("measurement.input", "required for LC and rotation measurements");
    if (cfg.mtype == MeasurementType::LinearCombination && cfg.m == 0) bad("measurement.m", "required for LC measurements");
  }
  if (const json* cj = opt(root, "comprehensive")) {
    allow(*cj, "comprehensive", {"kind"});
    if (const json* v = opt(*cj, "kind"))
      cfg.comp = at_path("comprehensive.kind", [&] { return parse_comp_kind(str(*v, "comprehensive.kind")); });
  }
  if (t == TaskKind::Mintime) {
    const json* mj = opt(root, "mintime");
    if (!mj) bad("mintime", "missing section");
    allow(*mj, "mintime", {"target", "method"});
    if (!opt(*mj, "target")) bad("mintime.target", "missing");
    cfg.f_target = positive((*mj)["target"], "mintime.target");
    if (const json* v = opt(*mj, "method"))
      cfg.search = at_path("mintime.method", [&] { return parse_search_mode(str(*v, "mintime.method")); });
  }
  if (const json* aj = opt(root, "adapt")) {
    allow(*aj, "adapt", {"pre_rounds", "x_opt", "free_measurement", "rounds"});
    if (const json* v = opt(*aj, "pre_rounds")) cfg.adapt.pre_rounds = count(*v, "adapt.pre_rounds");
    if (const json* v = opt(*aj, "x_opt")) {
      cfg.adapt.x_opt = numbers(*v, "adapt.x_opt");
      if (cfg.adapt.x_opt->size() != cfg.model.nparams) bad("adapt.x_opt", "expected one entry per parameter");
    }
    if (const json* v = opt(*aj, "free_measurement")) cfg.adapt.free_measurement = boolean(*v, "adapt.free_measurement");
    if (const json* v = opt(*aj, "rounds")) cfg.adapt.rounds = count(*v, "adapt.rounds");
  }

  switch (t) {
    case TaskKind::Bounds:
    case TaskKind::Mopt:
      require_rho0(cfg);
      if (cfg.model.spec && cfg.model.spec->H0.empty()) bad("model", "needs a Hamiltonian");
      break;
    case TaskKind::Copt:
    case TaskKind::Mintime:
      if (!cfg.model.spec || cfg.model.spec->Hc.empty()) bad("model.Hc", "control tasks need control Hamiltonians");
      require_rho0(cfg);
      break;
    case TaskKind::Compopt:
      if (cfg.comp != CompKind::SM && (!cfg.model.spec || cfg.model.spec->Hc.empty()))
        bad("model.Hc", "control tasks need control Hamiltonians");
      if (cfg.comp == CompKind::CM) require_rho0(cfg);
      break;
    default:
      break;
  }
}

void read_output(const json& root, ScenarioConfig& cfg) {
  if (const json* oj = opt(root, "output")) {
    allow(*oj, "output", {"directory", "save_all"});
    if (const json* v = opt(*oj, "directory")) cfg.output_dir = str(*v, "output.directory");
    if (const json* v = opt(*oj, "save_all")) cfg.save_all = boolean(*v, "output.save_all");
  }
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

TaskKind parse_task(const std::string& s) {
  static const std::map<std::string, TaskKind> m{{"bounds", TaskKind::Bounds}, {"bayes", TaskKind::Bayes},
                                                 {"copt", TaskKind::Copt},     {"sopt", TaskKind::Sopt},
                                                 {"mopt", TaskKind::Mopt},     {"compopt", TaskKind::Compopt},
                                                 {"mintime", TaskKind::Mintime}, {"adapt", TaskKind::Adapt}};
  auto it = m.find(s);
  if (it == m.end()) fail(ErrorKind::Config, "unknown task '" + s + "'");
  return it->second;
}

const char* to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Bounds: return "bounds";
    case TaskKind::Bayes: return "bayes";
    case TaskKind::Copt: return "copt";
    case TaskKind::Sopt: return "sopt";
    case TaskKind::Mopt: return "mopt";
    case TaskKind::Compopt: return "compopt";
    case TaskKind::Mintime: return "mintime";
    case TaskKind::Adapt: return "adapt";
  }
  return "?";
}

Parameterization ModelConfig::parameterization() const {
  Parameterization p;
  if (kraus) p.kraus = kraus;
  else p.dynamics = spec;
  return p;
}

ScenarioConfig parse_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, origin + ":" + line_col(text, e.byte) + ": parse error: " + e.what());
  }
  allow(root, "", {"schema_version", "description", "task", "model", "dynamics", "objective", "algorithm", "measurement",
                   "comprehensive", "mintime", "bayes", "adapt", "output"});
  ScenarioConfig cfg;
  if (!opt(root, "schema_version")) bad("schema_version", "missing");
  cfg.schema_version = static_cast<int>(integer(root["schema_version"], "schema_version"));
  if (cfg.schema_version != kSchemaVersion)
    bad("schema_version", "unsupported version " + std::to_string(cfg.schema_version) + " (expected " +
                              std::to_string(kSchemaVersion) + ")");
  if (const json* d = opt(root, "description")) str(*d, "description");
  if (!opt(root, "task")) bad("task", "missing");
  cfg.task = at_path("task", [&] { return parse_task(str(root["task"], "task")); });
  read_model(root, cfg);
  read_algorithm(root, cfg);
  read_grid(root, cfg);
  read_task_sections(root, cfg);
  read_output(root, cfg);
  cfg.canonical = root.dump();
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, path + ": cannot read config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

Mat matrix_from_json(const std::string& text) {
  try {
    return matrix(json::parse(text), "matrix");
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("matrix: ") + e.what());
  }
}

std::string matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows.dump();
}

PriorGrid build_grid(const ScenarioConfig& cfg) {
  const ModelConfig& m = cfg.model;
  if (m.template_id.empty()) fail(ErrorKind::Config, "model.template: required for grid tasks");
  PriorGrid g = make_prior_grid(m.template_id, m.constants, cfg.bayes.axes, m.rho0, m.spec->tspan, m.spec->decay);
  if (cfg.bayes.prior == PriorKind::Gaussian) set_gaussian_prior(g, cfg.bayes.mu, cfg.bayes.eta);
  else set_uniform_prior(g);
  return g;
}

Povm measurement_for(const ScenarioConfig& cfg) {
  return cfg.obj.M.ops.empty() ? default_povm(static_cast<int>(cfg.model.dim)) : cfg.obj.M;
}

DerivedState final_state(const ScenarioConfig& cfg) {
  const ModelConfig& m = cfg.model;
  if (m.rho0.size() == 0) fail(ErrorKind::Config, "model.rho0: required");
  if (m.kraus) return kraus_apply(m.rho0, *m.kraus);
  return lindblad_final(*m.spec, m.rho0);
}

AdaptiveSession adapt_session(const ScenarioConfig& cfg, XOpt* info) {
  const PriorGrid g = build_grid(cfg);
  Povm M = measurement_for(cfg);
  XOpt xo;
  if (!cfg.adapt.x_opt) {
    xo = find_x_opt(g, M, cfg.obj.W, cfg.adapt.free_measurement, cfg.algo);
    if (cfg.adapt.free_measurement) M = xo.M;
  } else {
    xo.x = *cfg.adapt.x_opt;
    if (cfg.adapt.free_measurement) {
      // Optimize the readout at the grid point closest to the requested working point.
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.point(i);
        double d = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a) d += (x[a] - xo.x[a]) * (x[a] - xo.x[a]);
        if (d < best) {
          best = d;
          xo.index = i;
        }
      }
      MeasurementProblem mp;
      mp.state = g.states[xo.index];
      mp.W = cfg.obj.W;
      M = measurement_opt(mp, cfg.algo).M;
    }
  }
  xo.M = M;
  if (info) *info = xo;
  return make_session(g, M, xo.x, cfg.adapt.pre_rounds, cfg.bayes.est);
}

OutcomeModel adapt_truth(const ScenarioConfig& cfg, const Povm& M) {
  const ModelConfig& m = cfg.model;
  return template_outcome_model(m.template_id, m.constants, m.rho0, m.spec->tspan, m.spec->decay, M);
}

}  // namespace qmetro
