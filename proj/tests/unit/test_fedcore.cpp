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

#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "fedbea/analysis.hpp"
#include "fedbea/bea.hpp"
#include "fedbea/data.hpp"
#include "fedbea/errors.hpp"
#include "fedbea/fedcore.hpp"
#include "support/oracles.hpp"

namespace fedbea {
namespace {

using fed::Algorithm;
using fed::EpsilonPolicy;
using fed::FederationConfig;
using testing::scalar;
using testing::scalar_quadratic;

fed::ScheduleSource fixed_order(std::vector<std::size_t> order) {
  return [order](std::uint64_t) { return order; };
}

std::vector<data::ClientBatches> quadratic_suite(std::size_t m, std::size_t k, Eigen::Index d,
                                                 double heterogeneity, std::uint64_t seed) {
  data::QuadraticTaskSpec spec;
  spec.num_clients = m;
  spec.batches_per_client = k;
  spec.dimension = d;
  spec.heterogeneity = heterogeneity;
  spec.seed = seed;
  return data::synth_quadratic_tasks(spec);
}

fed::FederationState run(std::vector<data::ClientBatches> clients, const ParamVector& w0,
                         FederationConfig cfg, std::size_t rounds) {
  auto state = fed::make_state(std::move(clients), w0);
  for (std::size_t r = 0; r < rounds; ++r) state = fed::run_round(state, cfg).state;
  return state;
}

TEST(LocalSgd, Examples) {
  const data::ClientBatches one{scalar_quadratic(1.0, 0.0)};
  EXPECT_DOUBLE_EQ(fed::local_sgd_round(one, scalar(1.0), 0.1, 1, fixed_order({0}))(0), 0.9);
  EXPECT_EQ(fed::local_sgd_round(one, scalar(1.0), 0.0, 1, fixed_order({0}))(0), 1.0);

  const data::ClientBatches two{scalar_quadratic(1.0, 0.0), scalar_quadratic(1.0, 2.0)};
  EXPECT_NEAR(fed::local_sgd_round(two, scalar(0.0), 0.1, 1, fixed_order({0, 1}))(0), 0.2,
              1e-15);
  EXPECT_NEAR(fed::local_sgd_round(two, scalar(0.0), 0.1, 1, fixed_order({1, 0}))(0), 0.18,
              1e-15);
}

TEST(LocalSgd, DivergenceNamesTheStep) {
  const data::ClientBatches batches{scalar_quadratic(1.0, 0.0), scalar_quadratic(1e300, 0.0)};
  try {
    fed::local_sgd_round(batches, scalar(1.0), 1e10, 1, fixed_order({0, 1}));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step(), 1);
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(LocalSgd, ScheduleMustCoverBatches) {
  const data::ClientBatches two{scalar_quadratic(1.0, 0.0), scalar_quadratic(1.0, 2.0)};
  EXPECT_THROW(fed::local_sgd_round(two, scalar(0.0), 0.1, 1, fixed_order({0})), ConfigError);
}

TEST(Aggregate, Examples) {
  const std::vector<ParamVector> pair{scalar(1.0), scalar(3.0)};
  EXPECT_EQ(fed::aggregate(pair)(0), 2.0);
  const std::vector<ParamVector> single{scalar(0.1)};
  EXPECT_EQ(fed::aggregate(single)(0), 0.1);
  EXPECT_THROW(fed::aggregate(std::vector<ParamVector>{}), DomainError);
  const std::vector<ParamVector> mixed{scalar(1.0), ParamVector::Zero(2)};
  EXPECT_THROW(fed::aggregate(mixed), ConfigError);
}

TEST(Aggregate, PermutationInvariantBits) {
  std::mt19937_64 eng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ParamVector> params;
    for (int i = 0; i < 9; ++i) params.push_back(testing::random_vector(eng, 5, 1e3));
    const ParamVector base = fed::aggregate(params);
    std::shuffle(params.begin(), params.end(), eng);
    EXPECT_EQ(fed::aggregate(params), base);
  }
}

TEST(SampleParticipants, FullAndDeterministic) {
  const auto all = fed::sample_participants(6, 1.0, 3, 9);
  EXPECT_EQ(all, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
  EXPECT_EQ(fed::sample_participants(10, 0.3, 4, 2), fed::sample_participants(10, 0.3, 4, 2));
  EXPECT_EQ(fed::sample_participants(10, 0.3, 4, 2).size(), 3u);
  EXPECT_THROW(fed::sample_participants(10, 0.0, 1, 1), ConfigError);
  EXPECT_THROW(fed::sample_participants(10, 1.5, 1, 1), ConfigError);
}

TEST(SampleParticipants, HalfParticipationFrequency) {
  std::vector<int> count(10, 0);
  for (std::uint64_t r = 1; r <= 1000; ++r)
    for (std::size_t j : fed::sample_participants(10, 0.5, r, 123)) ++count[j];
  for (int c : count) EXPECT_NEAR(c, 500, 50);
}

TEST(FedAvgRound, SingleClientIsLocalSgd) {
  auto clients = quadratic_suite(1, 4, 3, 1.0, 2);
  const ParamVector w0 = ParamVector::Constant(3, 0.5);
  FederationConfig cfg;
  cfg.eta = 0.05;
  cfg.local_epochs = 2;
  cfg.seed = 8;
  const auto r = fed::fedavg_round(fed::make_state(clients, w0), cfg);
  const ParamVector want =
      fed::local_sgd_round(clients[0], w0, 0.05, 2, fed::client_schedule(4, 1, 0, 8));
  EXPECT_EQ(r.state.w, want);
  EXPECT_EQ(r.state.round, 1u);
}

TEST(FedAvgRound, SymmetricClientsCancel) {
  std::vector<data::ClientBatches> clients{{scalar_quadratic(1.0, 1.0)},
                                           {scalar_quadratic(1.0, -1.0)}};
  FederationConfig cfg;
  cfg.eta = 0.1;
  const auto r = fed::fedavg_round(fed::make_state(clients, scalar(0.0)), cfg);
  EXPECT_EQ(r.state.w(0), 0.0);
}

TEST(FedAvgRound, ThreadCountDoesNotChangeBits) {
  auto clients = quadratic_suite(7, 3, 4, 2.0, 5);
  FederationConfig cfg;
  cfg.eta = 0.02;
  cfg.seed = 4;
  const auto one = run(clients, ParamVector::Zero(4), cfg, 5);
  cfg.threads = 3;
  EXPECT_EQ(run(clients, ParamVector::Zero(4), cfg, 5).w, one.w);
}

TEST(DispersionCorrection, MatchesDirectFormula) {
  auto clients = quadratic_suite(3, 2, 3, 2.0, 6);
  const ParamVector w = ParamVector::Constant(3, 0.3);
  const std::vector<std::size_t> ids{0, 2};
  const double eta = 0.01;
  const std::size_t a = 2;
  const auto got = fed::dispersion_correction(clients, ids, w, a, eta);
  ASSERT_EQ(got.size(), 2u);

  // Constant Hessians: H_j and g_j assembled from the closed-form quadratics.
  auto client_hg = [&](std::size_t j) {
    Matrix h = Matrix::Zero(3, 3);
    ParamVector g = ParamVector::Zero(3);
    for (const auto& b : clients[j]) {
      const auto& q = dynamic_cast<const models::QuadraticBatch&>(*b);
      h += q.curvature() / 2.0;
      g += q.curvature() * (w - q.center()) / 2.0;
    }
    return std::make_pair(h, g);
  };
  const auto [h0, g0] = client_hg(0);
  const auto [h2, g2] = client_hg(2);
  const Matrix h = (h0 + h2) / 2.0;
  const ParamVector g = (g0 + g2) / 2.0;
  const double coeff = std::pow(a * 2 * eta, 2) / 4.0;
  EXPECT_LE(testing::relative_error(got[0], coeff * (2.0 * h0 * g0 - 2.0 * h * g)), 1e-12);
  EXPECT_LE(testing::relative_error(got[1], coeff * (2.0 * h2 * g2 - 2.0 * h * g)), 1e-12);
}

TEST(DispersionCorrection, VanishingCases) {
  const auto base = quadratic_suite(1, 3, 4, 1.0, 3);
  const std::vector<data::ClientBatches> dup{base[0], base[0], base[0]};
  const std::vector<std::size_t> ids{0, 1, 2};
  const ParamVector w = ParamVector::Constant(4, -0.7);
  for (const auto& c : fed::dispersion_correction(dup, ids, w, 1, 0.05))
    EXPECT_EQ(c.cwiseAbs().maxCoeff(), 0.0);

  const auto het = quadratic_suite(3, 3, 4, 3.0, 3);
  for (const auto& c : fed::dispersion_correction(het, ids, w, 1, 0.0))
    EXPECT_EQ(c.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DispersionCorrection, QuadraticInStepSize) {
  const auto het = quadratic_suite(4, 2, 3, 3.0, 12);
  const std::vector<std::size_t> ids{0, 1, 2, 3};
  const ParamVector w = ParamVector::Constant(3, 0.2);
  const auto big = fed::dispersion_correction(het, ids, w, 1, 0.02);
  const auto small = fed::dispersion_correction(het, ids, w, 1, 0.01);
  for (std::size_t j = 0; j < ids.size(); ++j)
    EXPECT_LE(testing::relative_error(small[j], big[j] / 4.0), 1e-12);
}

TEST(NoDispersionRound, DuplicateClientsMatchFedAvgBits) {
  const auto base = quadratic_suite(1, 3, 4, 1.0, 21);
  const std::vector<data::ClientBatches> dup{base[0], base[0]};
  FederationConfig cfg;
  cfg.eta = 0.03;
  cfg.algorithm = Algorithm::kFedAvg;
  const auto a = run(dup, ParamVector::Constant(4, 1.0), cfg, 20);
  cfg.algorithm = Algorithm::kFedAvgNoDispersion;
  const auto b = run(dup, ParamVector::Constant(4, 1.0), cfg, 20);
  EXPECT_EQ(a.w, b.w);
}

TEST(NoDispersionRound, ReducesClientGradientVariance) {
  const auto clients = quadratic_suite(2, 3, 4, 2.0, 31);
  FederationConfig cfg;
  cfg.eta = 0.05;
  cfg.seed = 3;
  cfg.algorithm = Algorithm::kFedAvg;
  const auto plain = run(clients, ParamVector::Zero(4), cfg, 200);
  cfg.algorithm = Algorithm::kFedAvgNoDispersion;
  const auto corrected = run(clients, ParamVector::Zero(4), cfg, 200);
  EXPECT_LT(analysis::client_gradient_variance(clients, corrected.w),
            analysis::client_gradient_variance(clients, plain.w));
}

TEST(SamEpsilon, PolicyModes) {
  EpsilonPolicy p;
  p.mode = EpsilonPolicy::Mode::kSwitch;
  p.switch_round = 50;
  p.numerator = 0.01;
  const auto r = p.resolved(10, 0.001);
  EXPECT_DOUBLE_EQ(*r.eps_max, 0.005);
  const ParamVector g = ParamVector::Constant(2, 3.0);
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(g, r, 50), 0.005);
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(g, r, 51), 0.005);
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(g, r, 49), 0.01 / std::sqrt(g.norm()));
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(ParamVector::Zero(2), r, 1), 0.005);

  // Tiny gradients hit the cap.
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(ParamVector::Constant(2, 1e-12), r, 1), 0.005);

  EpsilonPolicy f;
  f.mode = EpsilonPolicy::Mode::kFixed;
  f.value = 0.002;
  EXPECT_DOUBLE_EQ(fed::sam_epsilon(g, f.resolved(10, 0.001), 3), 0.002);
  EXPECT_THROW(fed::sam_epsilon(g, f, 3), ConfigError);
}

TEST(SamStep, Examples) {
  const auto q = scalar_quadratic(1.0, 0.0);
  EXPECT_DOUBLE_EQ(fed::sam_step(*q, scalar(1.0), 0.1, 0.05)(0), 0.895);
  EXPECT_EQ(fed::sam_step(*q, scalar(1.0), 0.1, 0.0)(0), 1.0 - 0.1 * 1.0);
  EXPECT_EQ(fed::sam_step(*q, scalar(0.0), 0.1, 0.3)(0), 0.0);
  EXPECT_THROW(fed::sam_step(*q, scalar(0.0), 0.1, -1.0), DomainError);
}

TEST(FedSamRound, ZeroRadiusMatchesFedAvgBits) {
  const auto clients = quadratic_suite(3, 3, 5, 2.0, 40);
  FederationConfig cfg;
  cfg.eta = 0.02;
  cfg.algorithm = Algorithm::kFedAvg;
  const auto a = run(clients, ParamVector::Zero(5), cfg, 10);
  cfg.algorithm = Algorithm::kFedSam;
  cfg.eps_policy.mode = EpsilonPolicy::Mode::kFixed;
  cfg.eps_policy.value = 0.0;
  const auto b = run(clients, ParamVector::Zero(5), cfg, 10);
  EXPECT_EQ(a.w, b.w);
}

TEST(FedSamRound, ReportsMeanRadius) {
  const auto clients = quadratic_suite(2, 2, 3, 1.0, 41);
  FederationConfig cfg;
  cfg.eta = 0.01;
  cfg.algorithm = Algorithm::kFedSam;
  cfg.eps_policy.mode = EpsilonPolicy::Mode::kFixed;
  cfg.eps_policy.value = 0.004;
  const auto r = fed::run_round(fed::make_state(clients, ParamVector::Zero(3)), cfg);
  ASSERT_TRUE(r.epsilon_mean.has_value());
  EXPECT_DOUBLE_EQ(*r.epsilon_mean, 0.004);
  cfg.algorithm = Algorithm::kFedAvg;
  EXPECT_FALSE(fed::run_round(fed::make_state(clients, ParamVector::Zero(3)), cfg)
                   .epsilon_mean.has_value());
}

TEST(FedSamRound, ClientVarianceBetweenFedAvgAndScaffold) {
  const auto clients = quadratic_suite(4, 3, 4, 2.0, 52);
  const ParamVector w0 = ParamVector::Zero(4);
  FederationConfig cfg;
  cfg.eta = 0.05;
  cfg.seed = 7;
  cfg.algorithm = Algorithm::kFedAvg;
  const double avg = analysis::client_gradient_variance(clients, run(clients, w0, cfg, 300).w);
  cfg.algorithm = Algorithm::kScaffold;
  const double sca = analysis::client_gradient_variance(clients, run(clients, w0, cfg, 300).w);
  cfg.algorithm = Algorithm::kFedSam;
  cfg.eps_policy.mode = EpsilonPolicy::Mode::kFixed;
  cfg.eps_policy.value = 3 * 0.05 / 4.0;
  const double sam = analysis::client_gradient_variance(clients, run(clients, w0, cfg, 300).w);
  EXPECT_LT(sca, avg);
  EXPECT_LT(sam, avg);
  EXPECT_GT(sam, sca);
}

TEST(ScaffoldStep, Examples) {
  // Gradient 2 at w = 0 for A = 1, center -2.
  const auto q = scalar_quadratic(1.0, -2.0);
  EXPECT_NEAR(fed::scaffold_local_step(*q, scalar(0.0), 0.1, scalar(1.5), scalar(2.5))(0), -0.3,
              1e-15);
  const ParamVector c = scalar(0.7);
  EXPECT_EQ(fed::scaffold_local_step(*q, scalar(0.4), 0.1, c, c)(0), 0.4 - 0.1 * q->grad(scalar(0.4))(0));
  EXPECT_THROW(fed::scaffold_local_step(*q, scalar(0.0), 0.1, ParamVector::Zero(2), c),
               ConfigError);
}

TEST(ScaffoldRound, FirstRoundMatchesFedAvgBits) {
  const auto clients = quadratic_suite(4, 3, 5, 2.0, 60);
  FederationConfig cfg;
  cfg.eta = 0.02;
  cfg.algorithm = Algorithm::kFedAvg;
  const auto a = run(clients, ParamVector::Zero(5), cfg, 1);
  cfg.algorithm = Algorithm::kScaffold;
  const auto b = run(clients, ParamVector::Zero(5), cfg, 1);
  EXPECT_EQ(a.w, b.w);
  ASSERT_TRUE(b.variates.has_value());
  EXPECT_EQ(b.variates->client.size(), 4u);
}

TEST(ScaffoldRound, SingleClientMatchesFedAvgBits) {
  const auto clients = quadratic_suite(1, 3, 4, 2.0, 61);
  FederationConfig cfg;
  cfg.eta = 0.03;
  cfg.algorithm = Algorithm::kFedAvg;
  const auto a = run(clients, ParamVector::Ones(4), cfg, 25);
  cfg.algorithm = Algorithm::kScaffold;
  const auto b = run(clients, ParamVector::Ones(4), cfg, 25);
  EXPECT_EQ(a.w, b.w);
}

TEST(ScaffoldRound, TracksNoDispersionTrajectory) {
  const auto clients = quadratic_suite(4, 3, 4, 2.0, 62);
  const ParamVector w0 = ParamVector::Zero(4);
  FederationConfig cfg;
  cfg.eta = 0.01;
  cfg.algorithm = Algorithm::kScaffold;
  auto s = fed::make_state(clients, w0);
  cfg.algorithm = Algorithm::kFedAvgNoDispersion;
  auto n = fed::make_state(clients, w0);
  auto f = fed::make_state(clients, w0);
  double worst_gap = 0.0;
  double worst_fedavg_gap = 0.0;
  for (int r = 0; r < 200; ++r) {
    cfg.algorithm = Algorithm::kScaffold;
    s = fed::run_round(s, cfg).state;
    cfg.algorithm = Algorithm::kFedAvgNoDispersion;
    n = fed::run_round(n, cfg).state;
    cfg.algorithm = Algorithm::kFedAvg;
    f = fed::run_round(f, cfg).state;
    worst_gap = std::max(worst_gap, (s.w - n.w).norm());
    worst_fedavg_gap = std::max(worst_fedavg_gap, (f.w - n.w).norm());
  }
  EXPECT_LE(worst_gap, 0.05 * (n.w - w0).norm());
  EXPECT_LT(worst_gap, worst_fedavg_gap);
}

TEST(CentralSgd, NoOpAtZeroStepAndCountsRounds) {
  const auto clients = quadratic_suite(3, 2, 3, 1.0, 70);
  FederationConfig cfg;
  cfg.algorithm = Algorithm::kCentralSgd;
  cfg.eta = 0.0;
  const auto r = fed::run_round(fed::make_state(clients, ParamVector::Ones(3)), cfg);
  EXPECT_EQ(r.state.w, ParamVector::Ones(3));
  EXPECT_EQ(r.state.round, 1u);
  EXPECT_EQ(r.participants.size(), 3u);
}

TEST(CentralSgd, SingleBatchClientMatchesFedAvg) {
  const auto clients = quadratic_suite(1, 1, 3, 1.0, 71);
  FederationConfig cfg;
  cfg.eta = 0.1;
  cfg.local_epochs = 3;
  cfg.algorithm = Algorithm::kCentralSgd;
  const auto c = run(clients, ParamVector::Ones(3), cfg, 4);
  cfg.algorithm = Algorithm::kFedAvg;
  EXPECT_EQ(run(clients, ParamVector::Ones(3), cfg, 4).w, c.w);
}

TEST(CentralSgd, BeatsFedAvgOnHeterogeneousClassifier) {
  data::BlobSpec spec;
  spec.num_clients = 6;
  spec.num_classes = 4;
  spec.num_features = 4;
  spec.num_examples = 1200;
  spec.alpha = 0.1;
  spec.separation = 3.0;
  spec.seed = 5;
  const auto task = data::synth_blobs(spec);
  auto ds = std::make_shared<const Dataset>(task.dataset);
  auto model = std::make_shared<models::SoftmaxLinearModel>(4, 4);
  std::vector<data::ClientBatches> clients;
  for (const auto& shard : data::dirichlet_partition(*ds, task.partition)) {
    data::ClientBatches c;
    for (const auto& mb : data::shard_batches(ds, shard, 10, 5)) c.push_back(model->bind(mb));
    clients.push_back(std::move(c));
  }
  FederationConfig cfg;
  cfg.eta = 0.05;
  cfg.algorithm = Algorithm::kCentralSgd;
  const ParamVector w0 = model->initial_parameters(1);
  const double central = bea::global_loss(clients, run(clients, w0, cfg, 20).w);
  cfg.algorithm = Algorithm::kFedAvg;
  const double fedavg = bea::global_loss(clients, run(clients, w0, cfg, 20).w);
  EXPECT_LT(central, fedavg);
}

TEST(Validate, RejectsAndWarns) {
  const auto clients = quadratic_suite(2, 4, 2, 1.0, 80);
  FederationConfig cfg;
  cfg.eta = 0.01;
  EXPECT_TRUE(fed::validate(cfg, clients).empty());
  cfg.eta = 0.2;
  EXPECT_EQ(fed::validate(cfg, clients).size(), 1u);
  cfg.eta = -0.1;
  EXPECT_THROW(fed::validate(cfg, clients), ConfigError);
  cfg.eta = 0.01;
  cfg.local_epochs = 0;
  EXPECT_THROW(fed::validate(cfg, clients), ConfigError);
  cfg.local_epochs = 1;
  cfg.participation = 0.0;
  EXPECT_THROW(fed::validate(cfg, clients), ConfigError);
}

TEST(Names, RoundTrip) {
  for (auto a : {Algorithm::kFedAvg, Algorithm::kFedAvgNoDispersion, Algorithm::kFedSam,
                 Algorithm::kScaffold, Algorithm::kCentralSgd})
    EXPECT_EQ(fed::parse_algorithm(fed::to_string(a)), a);
  EXPECT_THROW(fed::parse_algorithm("fedprox"), ConfigError);
  for (auto m : {EpsilonPolicy::Mode::kFixed, EpsilonPolicy::Mode::kInvSqrtGradNorm,
                 EpsilonPolicy::Mode::kSwitch})
    EXPECT_EQ(fed::parse_epsilon_mode(fed::to_string(m)), m);
  EXPECT_THROW(fed::parse_epsilon_mode("adaptive"), ConfigError);
}

TEST(MakeState, RejectsBadInputs) {
  EXPECT_THROW(fed::make_state({}, scalar(0.0)), ConfigError);
  EXPECT_THROW(fed::make_state({{}}, scalar(0.0)), ConfigError);
  EXPECT_THROW(fed::make_state({{scalar_quadratic(1.0, 0.0)}}, ParamVector::Zero(2)),
               ConfigError);
}

}  // namespace
}  // namespace fedbea
