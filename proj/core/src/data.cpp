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

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "fedbea/data.hpp"
#include "fedbea/errors.hpp"
#include "fedbea/rng.hpp"

namespace fedbea::data {
namespace {

std::vector<double> dirichlet(Engine& eng, std::size_t k, double alpha) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  for (auto& x : p) {
    x = gamma(eng);
    sum += x;
  }
  // Tiny concentrations can underflow every draw.
  if (!(sum > 0.0)) {
    p.assign(k, 0.0);
    p[static_cast<std::size_t>(uniform_below(eng, k))] = 1.0;
    return p;
  }
  for (auto& x : p) x /= sum;
  return p;
}

// Integer counts summing to `total`, proportional to `weights`.
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& weights) {
  const std::size_t m = weights.size();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  std::vector<double> quota(m);
  for (std::size_t j = 0; j < m; ++j)
    quota[j] = wsum > 0.0 ? static_cast<double>(total) * weights[j] / wsum
                          : static_cast<double>(total) / static_cast<double>(m);
  std::vector<std::size_t> count(m);
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < m; ++j) {
    count[j] = static_cast<std::size_t>(std::floor(quota[j]));
    assigned += count[j];
  }
  std::vector<std::size_t> order(m);
  for (std::size_t j = 0; j < m; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (quota[a] - std::floor(quota[a])) > (quota[b] - std::floor(quota[b]));
  });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++count[order[r % m]];
  return count;
}

}  // namespace

std::vector<ClientShard> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec) {
  validate(ds);
  if (spec.num_clients < 1) throw ConfigError("partition needs at least one client");
  if (!(spec.alpha > 0.0)) throw ConfigError("Dirichlet alpha must be > 0");
  const std::size_t n = ds.size();
  const std::size_t m = spec.num_clients;
  if (n < m)
    throw InfeasiblePartitionError("cannot split " + std::to_string(n) + " examples across " +
                                   std::to_string(m) + " clients");
  const auto classes = static_cast<std::size_t>(ds.num_classes);

  Engine eng = make_engine(spec.seed, Stream::kPartition, {0});
  std::vector<std::vector<double>> proportions(m);
  for (auto& p : proportions) p = dirichlet(eng, classes, spec.alpha);

  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < n; ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  std::vector<ClientShard> shards(m);
  for (std::size_t j = 0; j < m; ++j) shards[j].client_id = j;

  for (std::size_t c = 0; c < classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    Engine class_eng = make_engine(spec.seed, Stream::kPartition, {1, c});
    const auto perm = random_permutation(class_eng, members.size());
    std::vector<double> weights(m);
    for (std::size_t j = 0; j < m; ++j) weights[j] = proportions[j][c];
    const auto counts = largest_remainder(members.size(), weights);
    std::size_t cursor = 0;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < counts[j]; ++t) shards[j].indices.push_back(members[perm[cursor++]]);
  }

  for (auto& s : shards) std::sort(s.indices.begin(), s.indices.end());

  for (std::size_t j = 0; j < m; ++j) {
    if (!shards[j].indices.empty()) continue;
    std::size_t donor = 0;
    for (std::size_t k = 1; k < m; ++k)
      if (shards[k].indices.size() > shards[donor].indices.size()) donor = k;
    shards[j].indices.push_back(shards[donor].indices.back());
    shards[donor].indices.pop_back();
  }
  return shards;
}

std::vector<MiniBatch> shard_batches(std::shared_ptr<const Dataset> ds, const ClientShard& shard,
                                     std::size_t batch_size, std::uint64_t seed) {
  if (!ds) throw ConfigError("shard_batches needs a dataset");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (shard.indices.empty()) throw ConfigError("client shard is empty");
  Engine eng = make_engine(seed, Stream::kShardBatches, {shard.client_id});
  const auto perm = random_permutation(eng, shard.indices.size());
  const std::size_t n = shard.indices.size();
  const std::size_t b = std::min(batch_size, n);
  const std::size_t count = n / b;
  std::vector<MiniBatch> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    out[k].source = ds;
    out[k].id = BatchId{shard.client_id, k};
    out[k].indices.reserve(b);
    for (std::size_t t = 0; t < b; ++t) out[k].indices.push_back(shard.indices[perm[k * b + t]]);
  }
  return out;
}

std::vector<std::size_t> batch_schedule(std::size_t num_batches, std::uint64_t round,
                                        std::size_t client_id, std::uint64_t epoch,
                                        std::uint64_t master_seed) {
  if (num_batches == 0) throw ConfigError("cannot schedule an empty shard");
  Engine eng = make_engine(master_seed, Stream::kBatchOrder, {round, client_id, epoch});
  return random_permutation(eng, num_batches);
}

std::vector<ClientBatches> synth_quadratic_tasks(const QuadraticTaskSpec& spec) {
  if (spec.num_clients < 1 || spec.batches_per_client < 1 || spec.dimension < 1)
    throw ConfigError("quadratic tasks need m, E, d >= 1");
  if (spec.heterogeneity < 0.0 || spec.within_spread < 0.0)
    throw ConfigError("quadratic task spreads must be >= 0");
  if (!(spec.min_eigenvalue >= 0.0) || spec.max_eigenvalue < spec.min_eigenvalue)
    throw ConfigError("quadratic eigenvalue range is invalid");
  const Eigen::Index d = spec.dimension;
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw_curvature = [&](Engine& eng) {
    std::uniform_real_distribution<double> eig(spec.min_eigenvalue, spec.max_eigenvalue);
    Matrix g(d, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(eng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Eigen::VectorXd lambda(d);
    for (Eigen::Index i = 0; i < d; ++i) lambda[i] = eig(eng);
    Matrix a = q * lambda.asDiagonal() * q.transpose();
    return Matrix(0.5 * (a + a.transpose()));
  };

  std::vector<Matrix> shared;
  if (spec.shared_curvature) {
    for (std::size_t k = 0; k < spec.batches_per_client; ++k) {
      Engine eng = make_engine(spec.seed, Stream::kTasks, {2, k});
      shared.push_back(draw_curvature(eng));
    }
  }

  std::vector<ClientBatches> clients(spec.num_clients);
  for (std::size_t j = 0; j < spec.num_clients; ++j) {
    Engine client_eng = make_engine(spec.seed, Stream::kTasks, {0, j});
    ParamVector nu(d);
    for (Eigen::Index i = 0; i < d; ++i) nu[i] = spec.heterogeneity * normal(client_eng);
    for (std::size_t k = 0; k < spec.batches_per_client; ++k) {
      Engine eng = make_engine(spec.seed, Stream::kTasks, {1, j, k});
      ParamVector delta(d);
      for (Eigen::Index i = 0; i < d; ++i) delta[i] = spec.within_spread * normal(eng);
      Matrix a = spec.shared_curvature ? shared[k] : draw_curvature(eng);
      clients[j].push_back(models::make_quadratic(std::move(a), nu + delta));
    }
  }
  return clients;
}

BlobTask synth_blobs(const BlobSpec& spec) {
  if (spec.num_clients < 1 || spec.num_classes < 2 || spec.num_features < 1 ||
      spec.num_examples < 1)
    throw ConfigError("blob task needs m >= 1, C >= 2, p >= 1, N >= 1");
  if (!(spec.alpha > 0.0) || !(spec.noise > 0.0) || !(spec.separation > 0.0))
    throw ConfigError("blob alpha, noise and separation must be > 0");
  const int c = spec.num_classes;
  const Eigen::Index p = spec.num_features;
  std::normal_distribution<double> normal(0.0, 1.0);

  RowMatrix means = RowMatrix::Zero(c, p);
  if (c == 2) {
    means(0, 0) = -0.5 * spec.separation;
    means(1, 0) = 0.5 * spec.separation;
  } else if (c <= p) {
    for (int k = 0; k < c; ++k) means(k, k) = spec.separation / std::sqrt(2.0);
  } else {
    Engine eng = make_engine(spec.seed, Stream::kDataset, {0});
    for (int k = 0; k < c; ++k) {
      for (Eigen::Index f = 0; f < p; ++f) means(k, f) = normal(eng);
      means.row(k) *= spec.separation / means.row(k).norm();
    }
  }

  BlobTask task;
  Dataset& ds = task.dataset;
  ds.num_classes = c;
  ds.features.resize(static_cast<Eigen::Index>(spec.num_examples), p);
  ds.labels.resize(spec.num_examples);
  Engine eng = make_engine(spec.seed, Stream::kDataset, {1});
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(c));
    ds.labels[i] = y;
    for (Eigen::Index f = 0; f < p; ++f)
      ds.features(static_cast<Eigen::Index>(i), f) = means(y, f) + spec.noise * normal(eng);
  }
  task.partition = PartitionSpec{spec.num_clients, spec.alpha, spec.seed};
  return task;
}

}  // namespace fedbea::data
