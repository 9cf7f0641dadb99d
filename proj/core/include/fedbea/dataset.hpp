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

#ifndef FEDBEA_DATASET_HPP_
#define FEDBEA_DATASET_HPP_

#include <cstddef>
#include <memory>
#include <vector>

#include "fedbea/types.hpp"

namespace fedbea {

// Labeled examples: one row of `features` per example.
struct Dataset {
  RowMatrix features;       // N x p
  std::vector<int> labels;  // N entries in [0, num_classes)
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  Eigen::Index num_features() const noexcept { return features.cols(); }
};

// Throws ConfigError unless N >= 1, rows match labels and labels are in range.
void validate(const Dataset& ds);

// (client j, step k) of a mini-batch.
struct BatchId {
  std::size_t client = 0;
  std::size_t step = 0;

  friend bool operator==(const BatchId&, const BatchId&) = default;
};

// A fixed subset of a dataset. Features are gathered on construction.
struct MiniBatch {
  std::shared_ptr<const Dataset> source;
  std::vector<std::size_t> indices;
  BatchId id;
};

}  // namespace fedbea

#endif  // FEDBEA_DATASET_HPP_
