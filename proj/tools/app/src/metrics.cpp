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

#include "fedbea/app/metrics.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "fedbea/errors.hpp"

namespace fedbea::app {

namespace {

std::optional<double> RoundMetrics::*const kFields[] = {
    &RoundMetrics::train_loss,     &RoundMetrics::eval_metric,
    &RoundMetrics::client_grad_var, &RoundMetrics::batch_grad_var,
    &RoundMetrics::dispersion,     &RoundMetrics::secondary_dispersion,
    &RoundMetrics::fisher_trace,   &RoundMetrics::max_eig,
    &RoundMetrics::epsilon_mean};

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string format_metrics_csv(const std::vector<RoundMetrics>& rows) {
  std::string out;
  for (std::size_t i = 0; i < kMetricColumns.size(); ++i) {
    if (i) out += ',';
    out += kMetricColumns[i];
  }
  out += "\r\n";
  for (const auto& r : rows) {
    out += std::to_string(r.round);
    for (auto field : kFields) {
      out += ',';
      if (const auto& v = r.*field) append_number(out, *v);
    }
    out += "\r\n";
  }
  return out;
}

void emit_metrics_csv(const std::vector<RoundMetrics>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write metrics file '" + path.string() + "'");
  const std::string text = format_metrics_csv(rows);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw IoError("failed writing metrics file '" + path.string() + "'");
}

std::vector<RoundMetrics> parse_metrics_csv(std::string_view text) {
  std::vector<RoundMetrics> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto fields = split_fields(line);
    if (fields.size() != kMetricColumns.size())
      throw ParseError("expected " + std::to_string(kMetricColumns.size()) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    if (line_no == 1) {
      for (std::size_t i = 0; i < fields.size(); ++i)
        if (fields[i] != kMetricColumns[i])
          throw ParseError("unexpected header field '" + std::string(fields[i]) + "'", line_no);
      continue;
    }
    RoundMetrics r;
    const std::string round(fields[0]);
    char* stop = nullptr;
    r.round = std::strtoull(round.c_str(), &stop, 10);
    if (round.empty() || *stop != '\0') throw ParseError("bad round index", line_no);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (fields[i].empty()) continue;
      const std::string cell(fields[i]);
      const double v = std::strtod(cell.c_str(), &stop);
      if (*stop != '\0')
        throw ParseError("bad number '" + cell + "'", line_no);
      r.*kFields[i - 1] = v;
    }
    rows.push_back(r);
  }
  if (line_no == 0) throw ParseError("missing header", 1);
  return rows;
}

}  // namespace fedbea::app
