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

#ifndef FEDBEA_APP_METRICS_HPP_
#define FEDBEA_APP_METRICS_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fedbea::app {

struct RoundMetrics {
  std::uint64_t round = 0;
  std::optional<double> train_loss;
  std::optional<double> eval_metric;
  std::optional<double> client_grad_var;
  std::optional<double> batch_grad_var;
  std::optional<double> dispersion;
  std::optional<double> secondary_dispersion;
  std::optional<double> fisher_trace;
  std::optional<double> max_eig;
  std::optional<double> epsilon_mean;
};

inline constexpr std::array<std::string_view, 10> kMetricColumns = {
    "round",        "train_loss", "eval_metric",          "client_grad_var", "batch_grad_var",
    "dispersion",   "secondary_dispersion", "fisher_trace", "max_eig",        "epsilon_mean"};

// RFC 4180 text (CRLF line ends, header first). Values use 17 significant
// digits; missing values are empty fields.
std::string format_metrics_csv(const std::vector<RoundMetrics>& rows);

// Writes format_metrics_csv(rows). Throws IoError naming the path on failure.
void emit_metrics_csv(const std::vector<RoundMetrics>& rows, const std::filesystem::path& path);

// Inverse of format_metrics_csv. Throws ParseError on malformed input.
std::vector<RoundMetrics> parse_metrics_csv(std::string_view text);

}  // namespace fedbea::app

#endif  // FEDBEA_APP_METRICS_HPP_
