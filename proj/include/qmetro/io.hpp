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

// CSV artifacts, run manifests and the task runner behind the CLI.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qmetro/config.hpp"

namespace qmetro {

// Shortest round-trip decimal form of a double.
std::string fmt(double v);
std::string sha256_hex(const std::string& data);

// Every artifact starts with one '#' comment row describing its layout; readers skip such rows.
std::string csv_values(const std::vector<double>& v, const std::string& what);
std::string csv_controls(const std::vector<ControlTable>& blocks);
std::string csv_states(const std::vector<Vec>& states);
std::string csv_measurements(const std::vector<Povm>& ms);
std::string csv_matrix(const RMat& m, const std::string& what);
std::string csv_xout(const std::vector<std::vector<double>>& xhat);
std::string csv_y(const std::vector<int>& y);
std::string csv_pout(const std::vector<RVec>& posts);

std::vector<std::vector<double>> read_rows(const std::string& text);
std::vector<double> read_values(const std::string& text);
std::vector<ControlTable> read_controls(const std::string& text);
std::vector<Vec> read_states(const std::string& text);
std::vector<Povm> read_measurements(const std::string& text);
std::vector<int> read_y(const std::string& text);
std::string read_file(const std::string& path);

struct Artifact {
  std::string name;
  std::string content;
};

struct TaskOutput {
  std::vector<Artifact> files;
  std::vector<std::pair<std::string, std::string>> summary;  // printed as a two-column table
};

TaskOutput run_task(const ScenarioConfig& cfg);

// xout.csv, y.csv, pout.csv and u.csv for a session; pout holds `posts` when given, else the
// current posterior.
std::vector<Artifact> adapt_artifacts(const AdaptiveSession& s, const std::vector<RVec>& posts = {});
// Feeds recorded outcomes through a fresh session built from cfg.
TaskOutput adapt_replay(const ScenarioConfig& cfg, const std::vector<int>& y);

std::string manifest_json(const ScenarioConfig& cfg, const std::vector<Artifact>& files);
// Writes the artifacts and manifest.json into dir (created when missing).
void write_bundle(const std::string& dir, const ScenarioConfig& cfg, const TaskOutput& out);

}  // namespace qmetro
