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

#ifndef FEDBEA_TYPES_HPP_
#define FEDBEA_TYPES_HPP_

#include <Eigen/Core>

namespace fedbea {

// Flat model parameter vector. All arithmetic is 64-bit.
using ParamVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline bool all_finite(const ParamVector& v) { return v.allFinite(); }

// Dense Hessians are only materialized up to this dimension.
inline constexpr Eigen::Index kMaxDenseDimension = 64;

}  // namespace fedbea

#endif  // FEDBEA_TYPES_HPP_
