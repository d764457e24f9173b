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

#include "qmetro/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "json.hpp"

namespace qmetro {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::Convergence, "SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

void row(std::ostringstream& os, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v[i]);
  os << '\n';
}

void complex_row(std::ostringstream& os, const Vec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v(i).real()) << ',' << fmt(v(i).imag());
  os << '\n';
}

std::string header_line(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] == '#') return line;
  return {};
}

std::size_t header_field(const std::string& text, const std::string& key) {
  const std::regex re(key + "=(\\d+)");
  std::smatch m;
  const std::string h = header_line(text);
  if (!std::regex_search(h, m, re)) fail(ErrorKind::Config, "artifact header lacks " + key);
  return std::stoul(m[1]);
}

Vec complex_from(const std::vector<double>& r) {
  if (r.size() % 2) fail(ErrorKind::Config, "odd column count in complex row");
  Vec v(static_cast<Eigen::Index>(r.size() / 2));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(r[2 * i], r[2 * i + 1]);
  return v;
}

}  // namespace

std::string csv_values(const std::vector<double>& v, const std::string& what) {
  std::ostringstream os;
  os << "# " << what << '\n';
  for (double x : v) os << fmt(x) << '\n';
  return os.str();
}

std::string csv_controls(const std::vector<ControlTable>& blocks) {
  const std::size_t K = blocks.empty() ? 0 : blocks.front().size();
  const std::size_t Nc = K ? blocks.front().front().size() : 0;
  std::ostringstream os;
  os << "# controls K=" << K << " Nc=" << Nc << ": K rows of Nc amplitudes per saved episode\n";
  for (const auto& b : blocks)
    for (const auto& r : b) row(os, r);
  return os.str();
}

std::string csv_states(const std::vector<Vec>& states) {
  std::ostringstream os;
  os << "# states d=" << (states.empty() ? 0 : states.front().size()) << ": one state per row, re,im interleaved\n";
  for (const auto& s : states) complex_row(os, s);
  return os.str();
}

std::string csv_measurements(const std::vector<Povm>& ms) {
  const auto d = ms.empty() ? 0 : ms.front().ops.front().rows();
  const auto m = ms.empty() ? 0 : ms.front().size();
  std::ostringstream os;
  os << "# measurements d=" << d << " m=" << m << ": m operators of d rows per saved episode, re,im interleaved\n";
  for (const auto& M : ms)
    for (const auto& op : M.ops)
      for (Eigen::Index r = 0; r < op.rows(); ++r) complex_row(os, op.row(r).transpose());
  return os.str();
}

std::string csv_matrix(const RMat& m, const std::string& what) {
  std::ostringstream os;
  os << "# " << what << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
    row(os, v);
  }
  return os.str();
}

std::string csv_xout(const std::vector<std::vector<double>>& xhat) {
  std::ostringstream os;
  os << "# estimate per round, one column per parameter\n";
  for (const auto& x : xhat) row(os, x);
  return os.str();
}

std::string csv_y(const std::vector<int>& y) {
  std::ostringstream os;
  os << "# outcome index per round\n";
  for (int v : y) os << v << '\n';
  return os.str();
}

std::string csv_pout(const std::vector<RVec>& posts) {
  std::ostringstream os;
  os << "# posterior on the flattened grid (last axis fastest), one row per saved round\n";
  for (const auto& p : posts) row(os, std::vector<double>(p.data(), p.data() + p.size()));
  return os.str();
}

std::vector<std::vector<double>> read_rows(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> r;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      const char* b = line.data() + pos;
      const char* e = line.data() + end;
      while (b < e && *b == ' ') ++b;
      auto res = std::from_chars(b, e, v);
      if (res.ec != std::errc() || res.ptr != e)
        fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": bad number '" + std::string(b, e) + "'");
      r.push_back(v);
      pos = end + 1;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> read_values(const std::string& text) {
  std::vector<double> out;
  for (const auto& r : read_rows(text)) {
    if (r.size() != 1) fail(ErrorKind::Config, "expected one value per row");
    out.push_back(r[0]);
  }
  return out;
}

std::vector<ControlTable> read_controls(const std::string& text) {
  const std::size_t K = header_field(text, "K");
  const auto rows = read_rows(text);
  if (K == 0 || rows.size() % K) fail(ErrorKind::Config, "controls row count is not a multiple of K");
  std::vector<ControlTable> out;
  for (std::size_t i = 0; i < rows.size(); i += K) out.emplace_back(rows.begin() + static_cast<long>(i), rows.begin() + static_cast<long>(i + K));
  return out;
}

std::vector<Vec> read_states(const std::string& text) {
  std::vector<Vec> out;
  for (const auto& r : read_rows(text)) out.push_back(complex_from(r));
  return out;
}

std::vector<Povm> read_measurements(const std::string& text) {
  const std::size_t d = header_field(text, "d"), m = header_field(text, "m");
  const auto rows = read_rows(text);
  if (d == 0 || m == 0 || rows.size() % (d * m)) fail(ErrorKind::Config, "measurement row count does not match d and m");
  std::vector<Povm> out;
  for (std::size_t b = 0; b < rows.size(); b += d * m) {
    Povm M;
    for (std::size_t k = 0; k < m; ++k) {
      Mat op(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      for (std::size_t r = 0; r < d; ++r) {
        const Vec v = complex_from(rows[b + k * d + r]);
        if (static_cast<std::size_t>(v.size()) != d) fail(ErrorKind::Config, "measurement row has the wrong width");
        op.row(static_cast<Eigen::Index>(r)) = v.transpose();
      }
      M.ops.push_back(op);
    }
    out.push_back(std::move(M));
  }
  return out;
}

std::vector<int> read_y(const std::string& text) {
  std::vector<int> out;
  for (double v : read_values(text)) {
    if (v < 0 || v != std::floor(v)) fail(ErrorKind::Config, "outcomes must be non-negative integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, path + ": cannot read file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string vec_text(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

std::vector<ControlTable> control_blocks(const OptRun& run, const ControlTable& final_ctrl, bool save_all) {
  if (!save_all || run.history.empty()) return {final_ctrl};
  const std::size_t K = final_ctrl.size(), Nc = K ? final_ctrl.front().size() : 0;
  std::vector<ControlTable> out;
  for (const auto& x : run.history) out.push_back(decode_controls(x, K, Nc));
  return out;
}

void check_outcomes(const std::vector<int>& y, std::size_t m) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= m)
      fail(ErrorKind::Config, "bayes.outcomes[" + std::to_string(i) + "]: outcome " + std::to_string(y[i]) +
                                  " out of range; the measurement has " + std::to_string(m) + " outcomes");
}

TaskOutput run_bounds(const ScenarioConfig& cfg) {
  TaskOutput out;
  const DerivedState ds = final_state(cfg);
  const Povm M = measurement_for(cfg);
  const auto n = static_cast<Eigen::Index>(cfg.model.nparams);
  const RMat W = weight_or_identity(cfg.obj.W, n);
  const RMat F = qfim(ds, cfg.obj.ld).entries;
  const RMat I = cfim(ds, M).entries;
  std::vector<std::pair<std::string, double>> table;
  if (n == 1) {
    table = {{"QFI", F(0, 0)}, {"CFI", I(0, 0)}};
  } else {
    table = {{"Tr(W F^-1)", tr_w_inv(F, W)}, {"Tr(W I^-1)", tr_w_inv(I, W)}};
    if (cfg.obj.ld == LdType::SLD) table.emplace_back("HCRB", hcrb(ds, W));
  }
  std::ostringstream bs;
  bs << "# quantity,value\n";
  for (const auto& [k, v] : table) {
    bs << k << ',' << fmt(v) << '\n';
    out.summary.emplace_back(k, fmt(v));
  }
  const double f = objective_value(ds, cfg.obj);
  out.summary.emplace_back(std::string("objective (") + to_string(cfg.obj.kind) + ")", fmt(f));
  out.files = {{"f.csv", csv_values({f}, "objective value")},
               {"bounds.csv", bs.str()},
               {"qfim.csv", csv_matrix(F, std::string(to_string(cfg.obj.ld)) + " QFIM")},
               {"cfim.csv", csv_matrix(I, "CFIM")}};
  return out;
}

ControlProblem control_problem(const ScenarioConfig& cfg) {
  ControlProblem p;
  p.spec = *cfg.model.spec;
  p.rho0 = cfg.model.rho0;
  p.obj = cfg.obj;
  p.bound = cfg.bound;
  p.Nc = cfg.Nc;
  return p;
}

TaskOutput run_copt(const ScenarioConfig& cfg) {
  TaskOutput out;
  std::vector<ControlTable> init;
  if (!cfg.ctrl0.empty()) init.push_back(cfg.ctrl0);
  const ControlResult r = control_opt(control_problem(cfg), cfg.algo, init, cfg.save_all);
  out.files = {{"f.csv", csv_values(r.run.values, "objective per episode")},
               {"controls.csv", csv_controls(control_blocks(r.run, r.ctrl, cfg.save_all))}};
  out.summary = {{"algorithm", to_string(cfg.algo.algo)},
                 {"episodes", std::to_string(r.run.episodes)},
                 {"objective", fmt(r.run.best_value)}};
  return out;
}

StateProblem state_problem(const ScenarioConfig& cfg) { return {cfg.model.parameterization(), cfg.obj}; }

TaskOutput run_sopt(const ScenarioConfig& cfg) {
  TaskOutput out;
  std::vector<Vec> init;
  if (cfg.model.psi0) init.push_back(*cfg.model.psi0);
  const StateResult r = state_opt(state_problem(cfg), cfg.algo, init, cfg.save_all);
  std::vector<Vec> states{r.psi};
  if (cfg.save_all && !r.run.history.empty()) {
    states.clear();
    for (const auto& x : r.run.history) states.push_back(decode_state(x));
  }
  out.files = {{"f.csv", csv_values(r.run.values, "objective per episode")}, {"states.csv", csv_states(states)}};
  out.summary = {{"algorithm", to_string(cfg.algo.algo)},
                 {"episodes", std::to_string(r.run.episodes)},
                 {"objective", fmt(r.run.best_value)}};
  return out;
}

TaskOutput run_mopt(const ScenarioConfig& cfg) {
  TaskOutput out;
  MeasurementProblem p;
  p.type = cfg.mtype;
  p.state = final_state(cfg);
  p.W = cfg.obj.W;
  p.input = cfg.minput;
  p.m = cfg.m;
  const MeasurementResult r = measurement_opt(p, cfg.algo, {}, cfg.save_all);
  std::vector<Povm> ms{r.M};
  if (cfg.save_all && !r.run.history.empty()) {
    ms.clear();
    for (const auto& x : r.run.history) ms.push_back(decode_measurement(p, x));
  }
  out.files = {{"f.csv", csv_values(r.run.values, "objective per episode")}, {"measurements.csv", csv_measurements(ms)}};
  out.summary = {{"algorithm", to_string(cfg.algo.algo)},
                 {"type", to_string(cfg.mtype)},
                 {"episodes", std::to_string(r.run.episodes)},
                 {"objective", fmt(r.run.best_value)}};
  return out;
}

TaskOutput run_compopt(const ScenarioConfig& cfg) {
  TaskOutput out;
  ComprehensiveProblem p;
  p.kind = cfg.comp;
  p.model = cfg.model.parameterization();
  p.rho0 = cfg.model.rho0;
  p.obj = cfg.obj;
  p.bound = cfg.bound;
  p.Nc = cfg.Nc;
  if (cfg.model.psi0) p.psi0.push_back(*cfg.model.psi0);
  const ComprehensiveResult r = comprehensive_opt(p, cfg.algo);
  out.files.push_back({"f.csv", csv_values(r.run.values, "objective per episode")});
  if (r.psi.size()) out.files.push_back({"states.csv", csv_states({r.psi})});
  if (!r.ctrl.empty()) out.files.push_back({"controls.csv", csv_controls({r.ctrl})});
  if (!r.M.ops.empty()) out.files.push_back({"measurements.csv", csv_measurements({r.M})});
  out.summary = {{"kind", to_string(cfg.comp)},
                 {"algorithm", to_string(cfg.algo.algo)},
                 {"episodes", std::to_string(r.run.episodes)},
                 {"objective", fmt(r.run.best_value)}};
  return out;
}

TaskOutput run_mintime(const ScenarioConfig& cfg) {
  TaskOutput out;
  const MinTimeResult r = mintime(control_problem(cfg), cfg.f_target, cfg.search, cfg.algo);
  std::vector<double> probes;
  std::ostringstream ps;
  ps << "# steps,optimized objective per probe\n";
  for (const auto& [n, v] : r.probes) ps << n << ',' << fmt(v) << '\n';
  for (const auto& pr : r.probes) probes.push_back(pr.second);
  out.files = {{"f.csv", csv_values(probes, "optimized objective per probe")},
               {"probes.csv", ps.str()},
               {"mtspan.csv", csv_values(r.tspan, "minimum-time tspan")},
               {"controls.csv", csv_controls({r.ctrl})}};
  out.summary = {{"steps", std::to_string(r.steps)}, {"time", fmt(r.t)}, {"objective", fmt(r.value)}};
  return out;
}

std::vector<int> bayes_outcomes(const ScenarioConfig& cfg, const Povm& M) {
  if (!cfg.bayes.outcomes.empty()) {
    check_outcomes(cfg.bayes.outcomes, M.size());
    return cfg.bayes.outcomes;
  }
  const RVec p = adapt_truth(cfg, M)(cfg.bayes.x_true);
  std::mt19937_64 rng(cfg.algo.seed);
  std::vector<int> y(cfg.bayes.rounds);
  for (auto& v : y) v = sample_outcome(p, rng);
  return y;
}

TaskOutput run_bayes(const ScenarioConfig& cfg) {
  TaskOutput out;
  const PriorGrid g = build_grid(cfg);
  const Povm M = measurement_for(cfg);
  const std::vector<int> y = bayes_outcomes(cfg, M);
  const BayesResult b = bayes_update(g, M, y, cfg.bayes.est, cfg.save_all);
  const BayesResult ml = mle(g, M, y);
  out.files = {{"xout.csv", csv_xout(b.estimates)},
               {"y.csv", csv_y(y)},
               {"pout.csv", csv_pout(cfg.save_all ? b.history : std::vector<RVec>{b.posterior})}};
  out.summary = {{"rounds", std::to_string(y.size())},
                 {cfg.bayes.est == Estimator::MAP ? "MAP" : "mean", vec_text(b.estimates.back())},
                 {"MLE", vec_text(ml.estimates.back())}};
  return out;
}

TaskOutput run_adapt(const ScenarioConfig& cfg) {
  if (cfg.bayes.x_true.empty()) fail(ErrorKind::Config, "bayes.x_true: required to simulate the adapt task");
  XOpt xo;
  AdaptiveSession s = adapt_session(cfg, &xo);
  const OutcomeModel truth = adapt_truth(cfg, xo.M);
  // Same draw order as simulate_adaptive.
  std::mt19937_64 rng(cfg.algo.seed);
  std::vector<RVec> posts;
  for (std::size_t n = 0; n < cfg.adapt.rounds; ++n) {
    std::vector<double> x = cfg.bayes.x_true;
    if (s.phase == Phase::Adaptive)
      for (std::size_t a = 0; a < x.size(); ++a) x[a] += s.u[a];
    step(s, sample_outcome(truth(x), rng));
    if (cfg.save_all) posts.push_back(s.posterior);
  }
  TaskOutput out;
  out.files = adapt_artifacts(s, posts);
  out.summary = {{"x_opt", vec_text(s.x_opt)},
                 {"rounds", std::to_string(s.round)},
                 {"phase", to_string(s.phase)},
                 {"xhat", vec_text(s.xhat())},
                 {"u", vec_text(s.u)}};
  return out;
}

}  // namespace

std::vector<Artifact> adapt_artifacts(const AdaptiveSession& s, const std::vector<RVec>& posts) {
  std::vector<std::vector<double>> xhat, u;
  std::vector<int> y;
  for (const auto& r : s.history) {
    xhat.push_back(r.xhat);
    y.push_back(r.y);
    u.push_back(r.u);
  }
  std::ostringstream us;
  us << "# offset u applied in each round, one column per parameter\n";
  for (const auto& r : u) {
    for (std::size_t i = 0; i < r.size(); ++i) us << (i ? "," : "") << fmt(r[i]);
    us << '\n';
  }
  return {{"xout.csv", csv_xout(xhat)},
          {"y.csv", csv_y(y)},
          {"pout.csv", csv_pout(posts.empty() ? std::vector<RVec>{s.posterior} : posts)},
          {"u.csv", us.str()}};
}

TaskOutput adapt_replay(const ScenarioConfig& cfg, const std::vector<int>& y) {
  XOpt xo;
  AdaptiveSession s = adapt_session(cfg, &xo);
  check_outcomes(y, s.outcomes());
  std::vector<RVec> posts;
  for (int v : y) {
    step(s, v);
    if (cfg.save_all) posts.push_back(s.posterior);
  }
  TaskOutput out;
  out.files = adapt_artifacts(s, posts);
  out.summary = {{"x_opt", vec_text(s.x_opt)},
                 {"rounds", std::to_string(s.round)},
                 {"phase", to_string(s.phase)},
                 {"xhat", vec_text(s.xhat())},
                 {"u", vec_text(s.u)}};
  return out;
}

TaskOutput run_task(const ScenarioConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::Bounds: return run_bounds(cfg);
    case TaskKind::Bayes: return run_bayes(cfg);
    case TaskKind::Copt: return run_copt(cfg);
    case TaskKind::Sopt: return run_sopt(cfg);
    case TaskKind::Mopt: return run_mopt(cfg);
    case TaskKind::Compopt: return run_compopt(cfg);
    case TaskKind::Mintime: return run_mintime(cfg);
    case TaskKind::Adapt: return run_adapt(cfg);
  }
  fail(ErrorKind::Config, "unknown task");
}

std::string manifest_json(const ScenarioConfig& cfg, const std::vector<Artifact>& files) {
  nlohmann::ordered_json j;
  j["schema_version"] = cfg.schema_version;
  j["task"] = to_string(cfg.task);
  j["config_sha256"] = sha256_hex(cfg.canonical);
  j["seed"] = cfg.algo.seed;
  j["save_all"] = cfg.save_all;
  nlohmann::ordered_json a = nlohmann::ordered_json::object();
  for (const auto& f : files) a[f.name] = sha256_hex(f.content);
  j["artifacts"] = a;
  return j.dump(2) + "\n";
}

void write_bundle(const std::string& dir, const ScenarioConfig& cfg, const TaskOutput& out) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Config, dir + ": cannot create output directory (" + ec.message() + ")");
  const auto put = [&](const std::string& name, const std::string& content) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) fail(ErrorKind::Config, dir + "/" + name + ": cannot write");
    f << content;
  };
  for (const auto& f : out.files) put(f.name, f.content);
  put("manifest.json", manifest_json(cfg, out.files));
}

}  // namespace qmetro
