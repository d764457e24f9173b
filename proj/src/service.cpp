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

#include "qmetro/service.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "qmetro/io.hpp"

namespace qmetro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

ServiceResponse reply(int status, const json& body) { return {status, body.dump(), "application/json"}; }

ServiceResponse error_reply(int status, const std::string& kind, const std::string& msg) {
  return reply(status, {{"error", msg}, {"kind", kind}});
}

const char* kind_slug(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Config: return "config";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::InvalidChannel: return "invalid_channel";
    case ErrorKind::NonExistence: return "non_existence";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Degeneracy: return "degeneracy";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::NotFound: return "not_found";
  }
  return "error";
}

ServiceResponse from_error(const Error& e) {
  return error_reply(e.kind() == ErrorKind::Config ? 400 : 422, kind_slug(e.kind()), e.what());
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t max_points) {
  std::vector<std::size_t> out;
  if (n <= max_points) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  if (max_points < 2) return {0};
  for (std::size_t k = 0; k < max_points; ++k)
    out.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(n - 1) /
                                                        static_cast<double>(max_points - 1))));
  return out;
}

json posterior_json(const Downsampled& d) { return {{"axes", d.axes}, {"values", d.values}}; }

}  // namespace

Downsampled downsample(const AdaptiveSession& s, std::size_t max_points) {
  Downsampled out;
  std::vector<std::vector<std::size_t>> picks;
  std::vector<std::size_t> stride(s.axes.size());
  std::size_t st = 1;
  for (std::size_t a = s.axes.size(); a-- > 0;) {
    stride[a] = st;
    st *= s.axes[a].size();
  }
  for (const auto& ax : s.axes) {
    picks.push_back(sample_indices(ax.size(), max_points));
    std::vector<double> v;
    for (std::size_t i : picks.back()) v.push_back(ax[i]);
    out.axes.push_back(v);
  }
  std::vector<std::size_t> k(picks.size(), 0);
  while (true) {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < k.size(); ++a) flat += picks[a][k[a]] * stride[a];
    out.values.push_back(s.posterior(static_cast<Eigen::Index>(flat)));
    std::size_t a = k.size();
    while (a-- > 0) {
      if (++k[a] < picks[a].size()) break;
      k[a] = 0;
    }
    if (a == static_cast<std::size_t>(-1)) break;
  }
  return out;
}

AdaptService::AdaptService(ServiceOptions opt) : opt_(std::move(opt)) {}

AdaptService::~AdaptService() { shutdown(); }

std::size_t AdaptService::size() const {
  std::shared_lock lk(mu_);
  return sessions_.size();
}

std::shared_ptr<AdaptService::Entry> AdaptService::find(const std::string& id) const {
  std::shared_lock lk(mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::string AdaptService::new_id() {
  static thread_local std::mt19937_64 rng(std::random_device{}());
  std::ostringstream os;
  os << std::hex << rng() << (++counter_);
  return os.str();
}

std::shared_ptr<AdaptService::Entry> AdaptService::build(const std::string& id, const std::string& config_text,
                                                         XOpt* xo) {
  const ScenarioConfig cfg = parse_config(config_text, "request");
  if (cfg.task != TaskKind::Adapt) fail(ErrorKind::Config, "task: the service runs adapt configs");
  auto e = std::make_shared<Entry>();
  e->id = id;
  e->config_text = config_text;
  auto snap = std::make_shared<Snapshot>();
  snap->session = adapt_session(cfg, xo);
  snap->status = to_string(snap->session.phase);
  snap->created = snap->updated = now_seconds();
  e->snap = snap;
  return e;
}

std::string AdaptService::round_payload(const Snapshot& s, const RoundResult& r) const {
  json j;
  j["round"] = r.round;
  j["y"] = s.session.history.back().y;
  j["u_next"] = r.u_next;
  j["x_hat"] = r.xhat;
  j["phase"] = to_string(r.phase);
  j["posterior"] = posterior_json(downsample(s.session, opt_.max_points));
  return j.dump();
}

void AdaptService::persist_create(const Entry& e, double created) const {
  if (opt_.data_dir.empty()) return;
  const fs::path dir = fs::path(opt_.data_dir) / e.id;
  fs::create_directories(dir);
  std::ofstream f(dir / "session.json", std::ios::binary);
  f << json{{"id", e.id}, {"created", created}, {"config", e.config_text}}.dump() << '\n';
  std::ofstream(dir / "log.jsonl", std::ios::binary | std::ios::app);
  if (!f) fail(ErrorKind::Config, "cannot persist session " + e.id);
}

void AdaptService::persist_round(const Entry& e, std::size_t round, int y) const {
  if (opt_.data_dir.empty()) return;
  std::ofstream f(fs::path(opt_.data_dir) / e.id / "log.jsonl", std::ios::binary | std::ios::app);
  f << json{{"round", round}, {"y", y}}.dump() << '\n';
  f.flush();
  if (!f) fail(ErrorKind::Config, "cannot append to the log of session " + e.id);
}

ServiceResponse AdaptService::create(const std::string& body) {
  XOpt xo;
  std::shared_ptr<Entry> e;
  try {
    std::string id;
    {
      std::unique_lock lk(mu_);
      do {
        id = new_id();
      } while (sessions_.count(id));
    }
    e = build(id, body, &xo);
    persist_create(*e, e->snap->created);
  } catch (const Error& err) {
    return from_error(err);
  }
  {
    std::unique_lock lk(mu_);
    sessions_[e->id] = e;
  }
  const AdaptiveSession& s = e->snap->session;
  json j;
  j["id"] = e->id;
  j["x_opt"] = s.x_opt;
  j["u0"] = s.u;
  j["round"] = s.round;
  j["phase"] = to_string(s.phase);
  j["outcomes"] = s.outcomes();
  j["pre_rounds"] = s.pre_rounds;
  j["prior"] = posterior_json(downsample(s, opt_.max_points));
  return reply(201, j);
}

ServiceResponse AdaptService::post_outcome(const std::string& id, const std::string& body) {
  auto e = find(id);
  if (!e) return error_reply(404, "not_found", "unknown session '" + id + "'");
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& ex) {
    return error_reply(400, "config", std::string("body: ") + ex.what());
  }
  if (!req.is_object() || !req.contains("y") || !req["y"].is_number_integer())
    return error_reply(400, "config", "y: expected an integer outcome index");
  for (auto it = req.begin(); it != req.end(); ++it)
    if (it.key() != "y" && it.key() != "round") return error_reply(400, "config", it.key() + ": unknown key");
  if (req.contains("round") && !req["round"].is_number_unsigned())
    return error_reply(400, "config", "round: expected a non-negative integer");
  const long long yv = req["y"].get<long long>();

  std::unique_lock lk(e->write, std::try_to_lock);
  if (!lk.owns_lock()) return error_reply(409, "conflict", "another outcome for this session is being processed");
  const auto cur = std::atomic_load(&e->snap);
  if (req.contains("round") && req["round"].get<std::size_t>() != cur->session.round)
    return error_reply(409, "conflict",
                       "stale round " + std::to_string(req["round"].get<std::size_t>()) + "; the session is at round " +
                           std::to_string(cur->session.round));
  if (yv < 0 || static_cast<std::size_t>(yv) >= cur->session.outcomes())
    return error_reply(422, kind_slug(ErrorKind::Domain),
                       "outcome index " + std::to_string(yv) + " out of range; the measurement has " +
                           std::to_string(cur->session.outcomes()) + " outcomes");
  auto next = std::make_shared<Snapshot>(*cur);
  RoundResult r;
  try {
    r = step(next->session, static_cast<int>(yv));
  } catch (const Error& err) {
    // The session itself is untouched; only the status records the failure.
    auto failed = std::make_shared<Snapshot>(*cur);
    failed->status = "error";
    failed->error = err.what();
    failed->updated = now_seconds();
    std::atomic_store(&e->snap, std::shared_ptr<const Snapshot>(failed));
    return from_error(err);
  }
  next->status = to_string(next->session.phase);
  next->error.clear();
  next->updated = now_seconds();
  try {
    persist_round(*e, r.round, static_cast<int>(yv));
  } catch (const Error& err) {
    return error_reply(500, "io", err.what());
  }
  const std::string payload = round_payload(*next, r);
  std::atomic_store(&e->snap, std::shared_ptr<const Snapshot>(next));
  {
    std::lock_guard g(e->ev_mu);
    e->events.push_back(payload);
  }
  e->ev_cv.notify_all();
  return {200, payload, "application/json"};
}

ServiceResponse AdaptService::get(const std::string& id) const {
  auto e = find(id);
  if (!e) return error_reply(404, "not_found", "unknown session '" + id + "'");
  const auto snap = std::atomic_load(&e->snap);
  const AdaptiveSession& s = snap->session;
  json j;
  j["id"] = id;
  j["status"] = snap->status;
  if (!snap->error.empty()) j["error"] = snap->error;
  j["created"] = snap->created;
  j["updated"] = snap->updated;
  j["round"] = s.round;
  j["phase"] = to_string(s.phase);
  j["pre_rounds"] = s.pre_rounds;
  j["outcomes"] = s.outcomes();
  j["x_opt"] = s.x_opt;
  j["u"] = s.u;
  j["x_hat"] = s.xhat();
  json h = json::array();
  for (const auto& r : s.history) h.push_back({{"y", r.y}, {"u", r.u}, {"x_hat", r.xhat}, {"phase", to_string(r.phase)}});
  j["history"] = h;
  j["posterior"] = posterior_json(downsample(s, opt_.max_points));
  return reply(200, j);
}

ServiceResponse AdaptService::export_bundle(const std::string& id) const {
  auto e = find(id);
  if (!e) return error_reply(404, "not_found", "unknown session '" + id + "'");
  const auto snap = std::atomic_load(&e->snap);
  json j = json::object();
  for (const auto& a : adapt_artifacts(snap->session)) j[a.name] = a.content;
  return reply(200, j);
}

bool AdaptService::events(const std::string& id, std::size_t from, std::vector<std::string>& out, int timeout_ms) const {
  auto e = find(id);
  if (!e) return false;
  std::unique_lock lk(e->ev_mu);
  e->ev_cv.wait_for(lk, std::chrono::milliseconds(timeout_ms), [&] { return e->events.size() > from || stopping_; });
  out.clear();
  for (std::size_t i = from; i < e->events.size(); ++i) out.push_back(e->events[i]);
  return true;
}

std::size_t AdaptService::resume() {
  if (opt_.data_dir.empty() || !fs::exists(opt_.data_dir)) return 0;
  std::size_t n = 0;
  for (const auto& d : fs::directory_iterator(opt_.data_dir)) {
    if (!d.is_directory() || !fs::exists(d.path() / "session.json")) continue;
    const json meta = json::parse(read_file((d.path() / "session.json").string()));
    const std::string id = meta.at("id").get<std::string>();
    auto e = build(id, meta.at("config").get<std::string>(), nullptr);
    auto snap = std::make_shared<Snapshot>(*e->snap);
    snap->created = meta.at("created").get<double>();
    std::ifstream log(d.path() / "log.jsonl");
    std::string line;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception&) {
        break;  // torn final write
      }
      if (rec.at("round").get<std::size_t>() != snap->session.round + 1)
        fail(ErrorKind::Config, "session " + id + ": log rounds out of order");
      const RoundResult r = step(snap->session, rec.at("y").get<int>());
      e->events.push_back(round_payload(*snap, r));
    }
    snap->status = to_string(snap->session.phase);
    snap->updated = now_seconds();
    e->snap = snap;
    std::unique_lock lk(mu_);
    sessions_[id] = e;
    ++n;
  }
  return n;
}

void AdaptService::shutdown() {
  stopping_ = true;
  std::shared_lock lk(mu_);
  for (auto& kv : sessions_) {
    { std::lock_guard g(kv.second->ev_mu); }
    kv.second->ev_cv.notify_all();
  }
}

void AdaptService::mount(httplib::Server& srv) {
  const auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, create(req.body)); });
  srv.Post(R"(/sessions/([^/]+)/outcomes)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, post_outcome(req.matches[1], req.body));
  });
  srv.Get(R"(/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get(req.matches[1]));
  });
  srv.Get(R"(/sessions/([^/]+)/export)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, export_bundle(req.matches[1]));
  });
  srv.Get(R"(/sessions/([^/]+)/events)", [this, send](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!find(id)) {
      send(res, error_reply(404, "not_found", "unknown session '" + id + "'"));
      return;
    }
    auto next = std::make_shared<std::size_t>(0);
    const std::string from = req.has_param("from") ? req.get_param_value("from") : req.get_header_value("Last-Event-ID");
    if (!from.empty()) {
      const auto [end, ec] = std::from_chars(from.data(), from.data() + from.size(), *next);
      if (ec != std::errc() || end != from.data() + from.size()) {
        send(res, error_reply(400, "config", "bad event index '" + from + "'"));
        return;
      }
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, id, next](std::size_t, httplib::DataSink& sink) {
      std::vector<std::string> evs;
      if (stopping_ || !events(id, *next, evs, 500)) {
        sink.done();
        return true;
      }
      std::string chunk;
      for (const auto& ev : evs) chunk += "id: " + std::to_string(++*next) + "\nevent: round\ndata: " + ev + "\n\n";
      if (chunk.empty()) chunk = ": keep-alive\n\n";
      return sink.write(chunk.data(), chunk.size());
    });
  });
}

void serve(AdaptService& svc, httplib::Server& srv, const std::string& host, int port) {
  svc.mount(srv);
  if (!srv.listen(host, port)) fail(ErrorKind::Config, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace qmetro
