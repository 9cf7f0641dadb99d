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

#include "fedbea/analysis.hpp"

#include <cmath>
#include <random>

#include "fedbea/bea.hpp"
#include "fedbea/errors.hpp"
#include "fedbea/parallel.hpp"
#include "fedbea/rng.hpp"

namespace fedbea::analysis {

namespace {
constexpr std::size_t kChunk = 1024;
}

double client_gradient_variance(std::span<const ClientBatches> clients, const ParamVector& w) {
  return bea::dispersion_term(clients, w);
}

double batch_gradient_variance(std::span<const ClientBatches> clients, const ParamVector& w) {
  return bea::scaffold_batch_term(clients, w);
}

VarianceReport variance_report(std::span<const ClientBatches> clients, const ParamVector& w,
                               std::uint64_t round) {
  return {client_gradient_variance(clients, w), batch_gradient_variance(clients, w), round};
}

double fisher_trace_from_gradients(const Matrix& per_example) {
  if (per_example.rows() == 0) throw ConfigError("need at least one per-example gradient");
  const Eigen::RowVectorXd mean = per_example.colwise().mean();
  return (per_example.rowwise() - mean).rowwise().squaredNorm().mean();
}

double fisher_trace_estimate(const models::ClassifierModel& model, const Dataset& ds,
                             const ParamVector& w, std::span<const std::size_t> rows,
                             std::size_t threads) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  if (rows.empty()) throw ConfigError("fisher trace needs at least one example");
  for (std::size_t r : rows)
    if (r >= ds.size()) throw ConfigError("row index out of range");
  const std::size_t n = rows.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;

  auto gather = [&](std::size_t c, RowMatrix& x, std::vector<int>& y) {
    const std::size_t begin = c * kChunk, end = std::min(n, begin + kChunk);
    x.resize(static_cast<Eigen::Index>(end - begin), ds.num_features());
    y.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      x.row(static_cast<Eigen::Index>(i - begin)) = ds.features.row(static_cast<Eigen::Index>(rows[i]));
      y[i - begin] = ds.labels[rows[i]];
    }
  };

  // Pass 1: mean gradient; pass 2: squared deviations.
  std::vector<ParamVector> sums(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    RowMatrix x;
    std::vector<int> y;
    gather(c, x, y);
    sums[c] = model.per_example_gradients(x, y, w).colwise().sum().transpose();
  });
  ParamVector mean = ParamVector::Zero(model.dimension());
  for (const auto& s : sums) mean += s;
  mean /= static_cast<double>(n);

  std::vector<double> dev(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    RowMatrix x;
    std::vector<int> y;
    gather(c, x, y);
    const Matrix g = model.per_example_gradients(x, y, w);
    dev[c] = (g.rowwise() - mean.transpose()).rowwise().squaredNorm().sum();
  });
  double total = 0.0;
  for (double d : dev) total += d;
  return total / static_cast<double>(n);
}

double hessian_exact_trace(std::span<const models::BatchPtr> batches, const ParamVector& w) {
  if (batches.empty()) throw ConfigError("need at least one batch");
  double total = 0.0;
  for (const auto& b : batches) total += b->full_hessian(w).trace();
  return total / static_cast<double>(batches.size());
}

SpectrumEstimate power_iteration(const LinearOperator& op, Eigen::Index dim,
                                 std::size_t max_iters, double tol, std::uint64_t seed) {
  if (max_iters == 0) throw ConfigError("max_iters must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
  if (dim < 1) throw ConfigError("dimension must be >= 1");
  Engine eng = make_engine(seed, Stream::kPowerIteration, {});
  std::normal_distribution<double> normal;
  ParamVector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(eng);
  v.normalize();

  SpectrumEstimate est;
  std::optional<double> previous;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    const ParamVector hv = op(v);
    const double lambda = v.dot(hv);
    est.max_eigenvalue = lambda;
    est.iterations = it;
    if (!std::isfinite(lambda)) throw DomainError("power iteration produced a non-finite value");
    if (previous && std::abs(lambda - *previous) <= tol * std::abs(lambda)) {
      est.converged = true;
      break;
    }
    previous = lambda;
    const double norm = hv.norm();
    if (!(norm > 0.0)) {
      est.converged = true;  // v lies in the null space; lambda = 0
      break;
    }
    v = hv / norm;
  }
  return est;
}

SpectrumEstimate max_eigenvalue_power_iteration(std::span<const models::BatchPtr> batches,
                                                const ParamVector& w, std::size_t max_iters,
                                                double tol, std::uint64_t seed) {
  if (batches.empty()) throw ConfigError("need at least one batch");
  return power_iteration(
      [&](const ParamVector& v) { return models::mean_hvp(batches, w, v); }, w.size(), max_iters,
      tol, seed);
}

}  // namespace fedbea::analysis
