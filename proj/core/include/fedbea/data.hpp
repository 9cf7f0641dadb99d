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

#ifndef FEDBEA_DATA_HPP_
#define FEDBEA_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "fedbea/dataset.hpp"
#include "fedbea/models.hpp"

namespace fedbea::data {

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha = 1.0;  // Dirichlet concentration
  std::uint64_t seed = 0;
};

struct ClientShard {
  std::size_t client_id = 0;
  std::vector<std::size_t> indices;  // into the parent dataset, ascending
};

// Non-IID split: each client draws class proportions from
// Dirichlet(alpha * 1_C); every class is then dealt to clients by
// largest-remainder quotas proportional to those weights. Clients left empty
// receive one example each, round-robin, from the currently largest shard.
//
// Throws InfeasiblePartitionError if N < m, ConfigError if alpha <= 0.
std::vector<ClientShard> dirichlet_partition(const Dataset& ds, const PartitionSpec& spec);

// Fixed mini-batches of a shard. The shard is shuffled once (seeded by the
// client id) and cut into floor(n / b) full batches; trailing examples are
// dropped. A shard smaller than b becomes a single batch.
std::vector<MiniBatch> shard_batches(std::shared_ptr<const Dataset> ds, const ClientShard& shard,
                                     std::size_t batch_size, std::uint64_t seed);

// Order in which a client visits its K batches during one local epoch.
// A pure function of (master_seed, round, client, epoch).
std::vector<std::size_t> batch_schedule(std::size_t num_batches, std::uint64_t round,
                                        std::size_t client_id, std::uint64_t epoch,
                                        std::uint64_t master_seed);

// Per-client quadratic mini-batch losses.
struct QuadraticTaskSpec {
  std::size_t num_clients = 1;
  std::size_t batches_per_client = 1;  // E
  Eigen::Index dimension = 1;
  double heterogeneity = 1.0;   // spread s of the client centers nu_j
  double within_spread = 1.0;   // spread of the batch offsets delta_jk
  bool shared_curvature = false;  // A_jk depends on k only
  double min_eigenvalue = 0.1;
  double max_eigenvalue = 2.0;
  std::uint64_t seed = 0;
};

using ClientBatches = std::vector<models::BatchPtr>;

// mu_jk = nu_j + delta_jk with nu_j ~ N(0, s^2 I), delta_jk ~ N(0, r^2 I);
// A_jk = Q diag(lambda) Q^T with lambda uniform in [min, max] and Q a random
// orthogonal matrix.
std::vector<ClientBatches> synth_quadratic_tasks(const QuadraticTaskSpec& spec);

struct BlobSpec {
  std::size_t num_clients = 1;
  int num_classes = 2;
  Eigen::Index num_features = 2;
  std::size_t num_examples = 100;
  double alpha = 1.0;
  double separation = 6.0;  // distance between class means, in noise std units
  double noise = 1.0;
  std::uint64_t seed = 0;
};

struct BlobTask {
  Dataset dataset;
  PartitionSpec partition;
};

// Isotropic Gaussian class blobs with balanced labels. Two classes sit at
// +-separation/2 along the first axis; with C <= p the means are
// (separation / sqrt 2) e_c; otherwise they are random directions scaled to
// `separation`.
BlobTask synth_blobs(const BlobSpec& spec);

// Headerless `label,f1,...,fp` rows, LF or CRLF. Throws IoError for a
// missing file and ParseError (with line number) for anything malformed.
Dataset load_csv_dataset(const std::filesystem::path& path);

}  // namespace fedbea::data

#endif  // FEDBEA_DATA_HPP_
