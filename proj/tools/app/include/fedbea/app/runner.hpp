/*
 * Copyright 2026 The fedbea Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDBEA_APP_RUNNER_HPP_
#define FEDBEA_APP_RUNNER_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbea/app/config.hpp"
#include "fedbea/app/metrics.hpp"
#include "fedbea/data.hpp"
#include "fedbea/fedcore.hpp"

namespace fedbea::app {

// The clients, model and starting point described by a configuration.
struct Task {
  TaskKind kind = TaskKind::kQuadratic;
  std::vector<data::ClientBatches> clients;
  models::ModelPtr model;                  // null for quadratic tasks
  std::shared_ptr<const Dataset> dataset;  // null for quadratic tasks
  std::vector<std::size_t> train_rows;     // rows covered by some batch, ascending
  ParamVector w0;
};

Task build_task(const AppConfig& cfg);

// Mean local steps per round, a * mean_j K_j.
double mean_local_steps(const Task& task, const AppConfig& cfg);

// Metrics of `state` after `round`. Expensive columns are filled only when
// `full` is set.
RoundMetrics measure(const Task& task, const AppConfig& cfg, const fed::RoundResult& result,
                     bool full);

struct RunOptions {
  // Source of the manifest's start timestamp (ISO 8601, UTC by default).
  std::function<std::string()> clock;
};

struct SimulationOutcome {
  std::filesystem::path metrics;
  std::filesystem::path manifest;
  std::filesystem::path summary;
  std::size_t rounds_completed = 0;
  std::optional<std::string> error;  // set when the run diverged
};

// Writes manifest.json, then runs every round and writes metrics.csv and
// summary.json into out_dir. A divergence flushes the completed rows plus
// an error row carrying only the failing round index.
SimulationOutcome run_simulation(const AppConfig& cfg, const std::filesystem::path& out_dir,
                                 const RunOptions& opts = {});

// Verification document for a quadratic task (see README for the schema).
nlohmann::json verification_report(const AppConfig& cfg);

// Writes manifest.json and report.json into out_dir; returns the report path.
std::filesystem::path run_verification(const AppConfig& cfg, const std::filesystem::path& out_dir,
                                       const RunOptions& opts = {});

// Dirichlet split of a CSV dataset as JSON.
nlohmann::json partition_report(const Dataset& ds, const data::PartitionSpec& spec);

std::string utc_timestamp();

}  // namespace fedbea::app

#endif  // FEDBEA_APP_RUNNER_HPP_
