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

#ifndef FEDBEA_ANALYSIS_HPP_
#define FEDBEA_ANALYSIS_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "fedbea/data.hpp"
#include "fedbea/models.hpp"
#include "fedbea/types.hpp"

namespace fedbea::analysis {

using data::ClientBatches;

struct VarianceReport {
  double client_grad_variance = 0.0;
  double batch_grad_variance = 0.0;
  std::uint64_t evaluated_at_round = 0;
};

// Same computation as bea::dispersion_term.
double client_gradient_variance(std::span<const ClientBatches> clients, const ParamVector& w);
// (1/m) sum_j mean_k ||grad L_jk(w) - grad L_j(w)||^2.
double batch_gradient_variance(std::span<const ClientBatches> clients, const ParamVector& w);
VarianceReport variance_report(std::span<const ClientBatches> clients, const ParamVector& w,
                               std::uint64_t round);

// (1/N) sum_i ||g_i - mean g||^2 over the rows of a per-example gradient
// matrix.
double fisher_trace_from_gradients(const Matrix& per_example);

// Per-example gradient variance over the listed rows of ds (all rows when
// `rows` is empty). Rows are processed in fixed chunks; the result does not
// depend on `threads`.
double fisher_trace_estimate(const models::ClassifierModel& model, const Dataset& ds,
                             const ParamVector& w, std::span<const std::size_t> rows = {},
                             std::size_t threads = 1);

// Trace of the mean full Hessian of the batches. CapabilityError above
// kMaxDenseDimension.
double hessian_exact_trace(std::span<const models::BatchPtr> batches, const ParamVector& w);

struct SpectrumEstimate {
  double max_eigenvalue = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::optional<double> fisher_trace;
  std::optional<double> exact_trace;
};

using LinearOperator = std::function<ParamVector(const ParamVector&)>;

// Power iteration on a symmetric operator. Converged when successive
// Rayleigh quotients differ by at most tol * |lambda|. Throws ConfigError if
// max_iters == 0 or tol <= 0.
SpectrumEstimate power_iteration(const LinearOperator& op, Eigen::Index dim,
                                 std::size_t max_iters, double tol, std::uint64_t seed);

// Power iteration on the mean Hessian of the batches via HVPs.
SpectrumEstimate max_eigenvalue_power_iteration(std::span<const models::BatchPtr> batches,
                                                const ParamVector& w, std::size_t max_iters,
                                                double tol, std::uint64_t seed = 0);

}  // namespace fedbea::analysis

#endif  // FEDBEA_ANALYSIS_HPP_
