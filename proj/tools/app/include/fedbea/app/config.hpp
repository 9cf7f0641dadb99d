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

#ifndef FEDBEA_APP_CONFIG_HPP_
#define FEDBEA_APP_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbea/fedcore.hpp"
#include "fedbea/models.hpp"

namespace fedbea::app {

enum class TaskKind { kQuadratic, kBlobs, kCsv };

struct TaskConfig {
  TaskKind kind = TaskKind::kQuadratic;
  // quadratic
  Eigen::Index dimension = 8;
  double within_spread = 1.0;
  bool shared_curvature = false;
  double min_eigenvalue = 0.1;
  double max_eigenvalue = 2.0;
  // blobs
  int classes = 2;
  Eigen::Index features = 2;
  std::size_t examples = 1000;
  double separation = 6.0;
  double noise = 1.0;
  // csv
  std::string path;
  // classifier tasks
  models::ObjectiveKind model = models::ObjectiveKind::kSoftmaxLinear;
  Eigen::Index hidden = 8;
};

struct VerifyConfig {
  std::vector<double> etas{4e-3, 2e-3, 1e-3};
  std::string oracle = "exact";  // or "monte_carlo"
  std::size_t mc_trials = 2000;
};

struct AppConfig {
  fed::Algorithm algorithm = fed::Algorithm::kFedAvg;
  TaskConfig task;
  std::size_t m = 1;
  std::size_t a = 1;
  // Quadratic tasks: batches per client (default 1). Data tasks: optional cap
  // on batches per client.
  std::optional<std::size_t> K;
  double eta = 1e-3;
  std::size_t rounds = 1;
  std::size_t batch_size = 32;
  double participation = 1.0;
  double alpha = 1.0;
  double heterogeneity = 1.0;
  std::uint64_t seed = 0;
  fed::EpsilonPolicy eps_policy;
  std::size_t metric_cadence = 1;
  std::optional<double> eval_threshold;
  std::size_t threads = 1;
  VerifyConfig verify;
};

// Parses and validates a configuration document. Unknown keys and every
// other violation are collected and reported together in one ConfigError.
AppConfig parse_config(const nlohmann::json& doc);
// Reads a JSON file (IoError if missing, ConfigError if malformed).
AppConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const AppConfig& cfg);

fed::FederationConfig federation_config(const AppConfig& cfg);

std::string_view to_string(TaskKind kind);

}  // namespace fedbea::app

#endif  // FEDBEA_APP_CONFIG_HPP_
