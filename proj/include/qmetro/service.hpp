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

// HTTP front end for adaptive sessions: JSON requests, server-sent events for round payloads.

#pragma once

#include <atomic>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "qmetro/config.hpp"

namespace httplib {
class Server;
}

namespace qmetro {

struct ServiceOptions {
  std::string data_dir;         // append-only session logs; empty disables persistence
  std::size_t max_points = 512; // posterior payload points per axis
};

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Posterior restricted to at most max_points evenly spaced indices per axis.
struct Downsampled {
  std::vector<std::vector<double>> axes;
  std::vector<double> values;
};
Downsampled downsample(const AdaptiveSession& s, std::size_t max_points);

class AdaptService {
 public:
  explicit AdaptService(ServiceOptions opt = {});
  ~AdaptService();

  ServiceResponse create(const std::string& body);
  ServiceResponse post_outcome(const std::string& id, const std::string& body);
  ServiceResponse get(const std::string& id) const;
  ServiceResponse export_bundle(const std::string& id) const;

  // Round payloads from index `from`; blocks up to timeout_ms for new ones. False for unknown ids.
  bool events(const std::string& id, std::size_t from, std::vector<std::string>& out, int timeout_ms) const;

  // Reloads every session found under data_dir; returns the count.
  std::size_t resume();
  void mount(httplib::Server& srv);
  void shutdown();  // wakes event streams so they close
  std::size_t size() const;

 private:
  struct Snapshot {
    AdaptiveSession session;
    std::string status;
    std::string error;
    double created = 0.0, updated = 0.0;
  };
  struct Entry {
    std::string id;
    std::string config_text;
    std::mutex write;  // single writer
    std::shared_ptr<const Snapshot> snap;
    mutable std::mutex ev_mu;
    mutable std::condition_variable ev_cv;
    std::vector<std::string> events;
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string new_id();
  std::shared_ptr<Entry> build(const std::string& id, const std::string& config_text, XOpt* xo);
  std::string round_payload(const Snapshot& s, const RoundResult& r) const;
  void persist_create(const Entry& e, double created) const;
  void persist_round(const Entry& e, std::size_t round, int y) const;

  ServiceOptions opt_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::atomic<bool> stopping_{false};
  std::uint64_t counter_ = 0;
};

// Blocks serving on host:port until srv.stop().
void serve(AdaptService& svc, httplib::Server& srv, const std::string& host, int port);

}  // namespace qmetro
