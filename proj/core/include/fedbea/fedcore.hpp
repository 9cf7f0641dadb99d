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

#ifndef FEDBEA_FEDCORE_HPP_
#define FEDBEA_FEDCORE_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedbea/data.hpp"
#include "fedbea/models.hpp"
#include "fedbea/types.hpp"

namespace fedbea::fed {

using data::ClientBatches;

enum class Algorithm { kFedAvg, kFedAvgNoDispersion, kFedSam, kScaffold, kCentralSgd };

std::string_view to_string(Algorithm a);
// Accepts the names produced by to_string; throws ConfigError otherwise.
Algorithm parse_algorithm(std::string_view name);

// How FedSAM picks the perturbation radius of each local step.
struct EpsilonPolicy {
  enum class Mode { kFixed, kInvSqrtGradNorm, kSwitch };

  Mode mode = Mode::kInvSqrtGradNorm;
  double value = 0.0;         // kFixed
  double numerator = 0.01;    // eps = numerator / sqrt(||g||)
  std::uint64_t switch_round = 0;  // kSwitch: rounds >= this use switch_value
  std::optional<double> eps_max;   // defaults to E * eta / 2
  std::optional<double> switch_value;  // defaults to E * eta / 2

  // Fills the defaults for E local steps at learning rate eta.
  EpsilonPolicy resolved(double local_steps, double eta) const;
};

std::string_view to_string(EpsilonPolicy::Mode mode);
EpsilonPolicy::Mode parse_epsilon_mode(std::string_view name);

// Perturbation radius for gradient g in (1-based) round `round`. The policy
// must be resolved. Result is clamped to [0, eps_max]; a zero gradient yields
// eps_max.
double sam_epsilon(const ParamVector& g, const EpsilonPolicy& policy, std::uint64_t round);

struct FederationConfig {
  Algorithm algorithm = Algorithm::kFedAvg;
  std::size_t local_epochs = 1;  // a
  double eta = 1e-3;
  std::size_t rounds = 1;
  double participation = 1.0;
  EpsilonPolicy eps_policy;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

// Throws ConfigError for invalid values. Returns human-readable warnings
// (currently: eta * E above 0.5 for some client).
std::vector<std::string> validate(const FederationConfig& cfg,
                                  std::span<const ClientBatches> clients);

struct ControlVariates {
  ParamVector server;
  std::vector<ParamVector> client;
};

struct FederationState {
  ParamVector w;
  std::uint64_t round = 0;  // completed rounds
  std::shared_ptr<const std::vector<ClientBatches>> clients;
  std::optional<ControlVariates> variates;
};

FederationState make_state(std::vector<ClientBatches> clients, ParamVector w0);

struct RoundResult {
  FederationState state;
  std::vector<std::size_t> participants;
  std::optional<double> epsilon_mean;  // FedSAM only
};

// Epoch-indexed batch order for one client in one round.
using ScheduleSource = std::function<std::vector<std::size_t>(std::uint64_t epoch)>;
// One optimizer step on `batch` from `w`.
using LocalStep = std::function<ParamVector(const models::BatchLoss& batch, const ParamVector& w)>;

// a epochs of `step` over the client's batches in scheduled order. Throws
// DivergenceError naming the offending step if a parameter becomes
// non-finite.
ParamVector local_round(const ClientBatches& batches, const ParamVector& w0, std::size_t epochs,
                        const ScheduleSource& schedule, const LocalStep& step);

// Plain local SGD: w <- w - eta * grad.
ParamVector local_sgd_round(const ClientBatches& batches, const ParamVector& w0, double eta,
                            std::size_t epochs, const ScheduleSource& schedule);

ScheduleSource client_schedule(std::size_t num_batches, std::uint64_t round,
                               std::size_t client_id, std::uint64_t seed);

// Arithmetic mean, accumulated over the inputs in lexicographic order so that
// any permutation of the list gives identical bits. Throws DomainError on an
// empty list and ConfigError on mismatched dimensions.
ParamVector aggregate(std::span<const ParamVector> params);

std::vector<std::size_t> sample_participants(std::size_t m, double fraction,
                                             std::uint64_t round, std::uint64_t seed);

// For each listed client j, (a^2 K_j^2 eta^2 / 4) (grad||grad L_j||^2 - grad||grad L_S||^2)
// at w0, where L_S averages the listed clients and grad||grad f||^2 = 2 H_f grad f.
std::vector<ParamVector> dispersion_correction(std::span<const ClientBatches> clients,
                                               std::span<const std::size_t> participants,
                                               const ParamVector& w0, std::size_t epochs,
                                               double eta);

// w - eta * grad(w + eps * grad(w)).
ParamVector sam_step(const models::BatchLoss& batch, const ParamVector& w, double eta, double eps);

// w - eta * (grad(w) + (c - c_j)).
ParamVector scaffold_local_step(const models::BatchLoss& batch, const ParamVector& w, double eta,
                                const ParamVector& client_variate,
                                const ParamVector& server_variate);

RoundResult fedavg_round(const FederationState& state, const FederationConfig& cfg);
RoundResult fedavg_no_dispersion_round(const FederationState& state, const FederationConfig& cfg);
RoundResult fedsam_round(const FederationState& state, const FederationConfig& cfg);
RoundResult scaffold_round(const FederationState& state, const FederationConfig& cfg);
// `local_epochs` shuffled passes over the concatenation of every client's
// batches, so batch visits per round match the federated variants.
RoundResult central_sgd_epoch(const FederationState& state, const FederationConfig& cfg);

// Dispatches on cfg.algorithm.
RoundResult run_round(const FederationState& state, const FederationConfig& cfg);

// Ideal control variates: c_j = grad L_j(w), c = mean_j c_j.
ControlVariates ideal_variates(std::span<const ClientBatches> clients, const ParamVector& w);

}  // namespace fedbea::fed

#endif  // FEDBEA_FEDCORE_HPP_
