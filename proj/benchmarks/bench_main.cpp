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

#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "fedbea/analysis.hpp"
#include "fedbea/bea.hpp"
#include "fedbea/data.hpp"
#include "fedbea/fedcore.hpp"
#include "fedbea/models.hpp"

namespace fedbea {
namespace {

std::shared_ptr<const Dataset> make_blobs(int classes, Eigen::Index features, std::size_t n) {
  data::BlobSpec spec;
  spec.num_classes = classes;
  spec.num_features = features;
  spec.num_examples = n;
  spec.seed = 1;
  return std::make_shared<const Dataset>(data::synth_blobs(spec).dataset);
}

MiniBatch all_rows(std::shared_ptr<const Dataset> ds) {
  MiniBatch mb;
  mb.source = ds;
  for (std::size_t i = 0; i < ds->size(); ++i) mb.indices.push_back(i);
  return mb;
}

void BM_SoftmaxHvp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto ds = make_blobs(10, 20, n);
  auto model = std::make_shared<models::SoftmaxLinearModel>(10, 20);
  auto batch = model->bind(all_rows(ds));
  const ParamVector w = model->initial_parameters(3);
  const ParamVector v = ParamVector::Ones(w.size());
  for (auto _ : state) benchmark::DoNotOptimize(batch->hvp(w, v));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_SoftmaxHvp)->Arg(64)->Arg(512)->Arg(4096);

void BM_MlpHvp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto ds = make_blobs(10, 20, n);
  auto model = std::make_shared<models::SmoothMlpModel>(10, 20, 32);
  auto batch = model->bind(all_rows(ds));
  const ParamVector w = model->initial_parameters(3);
  const ParamVector v = ParamVector::Ones(w.size());
  for (auto _ : state) benchmark::DoNotOptimize(batch->hvp(w, v));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}
BENCHMARK(BM_MlpHvp)->Arg(64)->Arg(512);

void BM_PermutationOracle(benchmark::State& state) {
  data::QuadraticTaskSpec spec;
  spec.num_clients = 4;
  spec.batches_per_client = static_cast<std::size_t>(state.range(0));
  spec.dimension = 8;
  spec.seed = 2;
  const auto clients = data::synth_quadratic_tasks(spec);
  bea::OracleOptions opts;
  opts.keep_orders = false;
  for (auto _ : state)
    benchmark::DoNotOptimize(
        bea::brute_force_expected_update(clients, ParamVector::Zero(8), 1e-3, opts));
}
BENCHMARK(BM_PermutationOracle)->DenseRange(2, 6);

void BM_FedAvgRound(benchmark::State& state) {
  auto ds = make_blobs(10, 10, 4000);
  auto model = std::make_shared<models::SoftmaxLinearModel>(10, 10);
  std::vector<data::ClientBatches> clients;
  for (const auto& shard : data::dirichlet_partition(*ds, {10, 0.2, 1})) {
    data::ClientBatches c;
    for (const auto& mb : data::shard_batches(ds, shard, 5, 1)) c.push_back(model->bind(mb));
    clients.push_back(std::move(c));
  }
  const auto start = fed::make_state(clients, model->initial_parameters(1));
  fed::FederationConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(fed::fedavg_round(start, cfg));
}
BENCHMARK(BM_FedAvgRound);

void BM_FisherTrace(benchmark::State& state) {
  auto ds = make_blobs(10, 20, 20000);
  models::SoftmaxLinearModel model(10, 20);
  const ParamVector w = model.initial_parameters(5);
  for (auto _ : state) benchmark::DoNotOptimize(analysis::fisher_trace_estimate(model, *ds, w));
}
BENCHMARK(BM_FisherTrace);

}  // namespace
}  // namespace fedbea

BENCHMARK_MAIN();
