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

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>

#include "fedbea/data.hpp"
#include "fedbea/errors.hpp"

namespace fedbea::data {
namespace {

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

double parse_real(std::string_view cell, std::size_t line_no, std::size_t column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError("column " + std::to_string(column) + ": '" + std::string(cell) +
                         "' is not a finite number",
                     line_no);
  return value;
}

int parse_label(std::string_view cell, std::size_t line_no) {
  int value = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || value < 0)
    throw ParseError("label '" + std::string(cell) + "' is not a non-negative integer",
                     line_no);
  return value;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path.string());

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::string line;
  bool saw_blank = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      saw_blank = true;
      continue;
    }
    if (saw_blank) throw ParseError("blank line inside data", line_no - 1);
    const auto cells = split_cells(line);
    if (cells.size() < 2) throw ParseError("row needs a label and at least one feature", line_no);
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw ParseError("row has " + std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(width),
                       line_no);
    labels.push_back(parse_label(cells[0], line_no));
    std::vector<double> row(width - 1);
    for (std::size_t c = 1; c < width; ++c) row[c - 1] = parse_real(cells[c], line_no, c + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("file contains no data rows", line_no == 0 ? 1 : line_no);

  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c + 1 < width; ++c)
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  ds.labels = std::move(labels);
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = std::max(2, max_label + 1);
  return ds;
}

}  // namespace fedbea::data
