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

#include "fedbea/fedcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fedbea/errors.hpp"
#include "fedbea/parallel.hpp"
#include "fedbea/rng.hpp"

namespace fedbea::fed {

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kFedAvg:
      return "fedavg";
    case Algorithm::kFedAvgNoDispersion:
      return "fedavg-no-dispersion";
    case Algorithm::kFedSam:
      return "fedsam";
    case Algorithm::kScaffold:
      return "scaffold";
    case Algorithm::kCentralSgd:
      return "central-sgd";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::kFedAvg, Algorithm::kFedAvgNoDispersion, Algorithm::kFedSam,
                      Algorithm::kScaffold, Algorithm::kCentralSgd})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

std::string_view to_string(EpsilonPolicy::Mode mode) {
  switch (mode) {
    case EpsilonPolicy::Mode::kFixed:
      return "fixed";
    case EpsilonPolicy::Mode::kInvSqrtGradNorm:
      return "inv_sqrt_grad_norm";
    case EpsilonPolicy::Mode::kSwitch:
      return "switch";
  }
  return "unknown";
}

EpsilonPolicy::Mode parse_epsilon_mode(std::string_view name) {
  for (auto m : {EpsilonPolicy::Mode::kFixed, EpsilonPolicy::Mode::kInvSqrtGradNorm,
                 EpsilonPolicy::Mode::kSwitch})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown eps_policy mode '" + std::string(name) + "'");
}

EpsilonPolicy EpsilonPolicy::resolved(double local_steps, double eta) const {
  EpsilonPolicy p = *this;
  const double half = 0.5 * local_steps * eta;
  if (!p.eps_max) p.eps_max = half;
  if (!p.switch_value) p.switch_value = half;
  return p;
}

double sam_epsilon(const ParamVector& g, const EpsilonPolicy& policy, std::uint64_t round) {
  if (!policy.eps_max || !policy.switch_value)
    throw ConfigError("sam_epsilon needs a resolved policy");
  const double cap = *policy.eps_max;
  if (!(cap >= 0.0)) throw ConfigError("eps_max must be >= 0");
  double eps = 0.0;
  switch (policy.mode) {
    case EpsilonPolicy::Mode::kFixed:
      eps = policy.value;
      break;
    case EpsilonPolicy::Mode::kSwitch:
      if (round >= policy.switch_round) {
        eps = *policy.switch_value;
        break;
      }
      [[fallthrough]];
    case EpsilonPolicy::Mode::kInvSqrtGradNorm: {
      const double norm = g.norm();
      if (!(norm > 0.0)) return cap;
      eps = policy.numerator / std::sqrt(norm);
      break;
    }
  }
  return std::clamp(eps, 0.0, cap);
}

std::vector<std::string> validate(const FederationConfig& cfg,
                                  std::span<const ClientBatches> clients) {
  if (!(cfg.eta >= 0.0) || !std::isfinite(cfg.eta)) throw ConfigError("eta must be >= 0");
  if (cfg.local_epochs < 1) throw ConfigError("local_epochs (a) must be >= 1");
  if (!(cfg.participation > 0.0 && cfg.participation <= 1.0))
    throw ConfigError("participation must be in (0, 1]");
  if (clients.empty()) throw ConfigError("federation needs at least one client");
  std::vector<std::string> warnings;
  std::size_t max_k = 0;
  for (const auto& c : clients) {
    if (c.empty()) throw ConfigError("every client needs at least one batch");
    max_k = std::max(max_k, c.size());
  }
  const double e_eta = cfg.eta * static_cast<double>(cfg.local_epochs * max_k);
  if (e_eta > 0.5) {
    std::ostringstream os;
    os << "eta * E = " << e_eta << " exceeds 0.5; the small-step regime does not apply";
    warnings.push_back(os.str());
  }
  return warnings;
}

FederationState make_state(std::vector<ClientBatches> clients, ParamVector w0) {
  if (clients.empty()) throw ConfigError("federation needs at least one client");
  for (const auto& c : clients) {
    if (c.empty()) throw ConfigError("every client needs at least one batch");
    for (const auto& b : c)
      if (!b || b->dimension() != w0.size())
        throw ConfigError("client batch dimension does not match the initial parameter");
  }
  if (!w0.allFinite()) throw ConfigError("initial parameter must be finite");
  FederationState s;
  s.w = std::move(w0);
  s.clients = std::make_shared<const std::vector<ClientBatches>>(std::move(clients));
  return s;
}

ParamVector local_round(const ClientBatches& batches, const ParamVector& w0, std::size_t epochs,
                        const ScheduleSource& schedule, const LocalStep& step) {
  ParamVector w = w0;
  long step_index = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto order = schedule(e);
    if (order.size() != batches.size())
      throw ConfigError("schedule does not cover the client's batches");
    for (std::size_t k : order) {
      w = step(*batches.at(k), w);
      if (!w.allFinite())
        throw DivergenceError("parameter became non-finite at local step " +
                                  std::to_string(step_index) + " (epoch " + std::to_string(e) +
                                  ", batch " + std::to_string(k) + ")",
                              step_index);
      ++step_index;
    }
  }
  return w;
}

ParamVector local_sgd_round(const ClientBatches& batches, const ParamVector& w0, double eta,
                            std::size_t epochs, const ScheduleSource& schedule) {
  return local_round(batches, w0, epochs, schedule,
                     [eta](const models::BatchLoss& b, const ParamVector& w) -> ParamVector {
                       return w - eta * b.grad(w);
                     });
}

ScheduleSource client_schedule(std::size_t num_batches, std::uint64_t round,
                               std::size_t client_id, std::uint64_t seed) {
  return [=](std::uint64_t epoch) {
    return data::batch_schedule(num_batches, round, client_id, epoch, seed);
  };
}

ParamVector aggregate(std::span<const ParamVector> params) {
  if (params.empty()) throw DomainError("cannot aggregate an empty parameter list");
  std::vector<const ParamVector*> order;
  order.reserve(params.size());
  for (const auto& p : params) {
    if (p.size() != params.front().size())
      throw ConfigError("aggregate: parameter dimensions differ");
    order.push_back(&p);
  }
  // Sorted reduction makes the result independent of input order.
  std::sort(order.begin(), order.end(), [](const ParamVector* a, const ParamVector* b) {
    return std::lexicographical_compare(a->begin(), a->end(), b->begin(), b->end());
  });
  models::RunningMean acc(params.front().size());
  for (const auto* p : order) acc.add(*p);
  return acc.value();
}

std::vector<std::size_t> sample_participants(std::size_t m, double fraction,
                                             std::uint64_t round, std::uint64_t seed) {
  if (m < 1) throw ConfigError("need at least one client");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("participation must be in (0, 1]");
  const auto k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m))), 1, m);
  std::vector<std::size_t> ids;
  if (k == m) {
    ids.resize(m);
    for (std::size_t j = 0; j < m; ++j) ids[j] = j;
    return ids;
  }
  Engine eng = make_engine(seed, Stream::kParticipants, {round});
  auto perm = random_permutation(eng, m);
  ids.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<ParamVector> dispersion_correction(std::span<const ClientBatches> clients,
                                               std::span<const std::size_t> participants,
                                               const ParamVector& w0, std::size_t epochs,
                                               double eta) {
  if (participants.empty()) throw DomainError("dispersion correction needs participants");
  std::vector<ParamVector> client_grad;
  models::RunningMean global(w0.size());
  for (std::size_t j : participants) {
    client_grad.push_back(models::mean_grad(clients[j], w0));
    global.add(client_grad.back());
  }
  const ParamVector& g = global.value();
  models::RunningMean global_hvp(w0.size());
  for (std::size_t j : participants) global_hvp.add(models::mean_hvp(clients[j], w0, g));
  const ParamVector global_term = 2.0 * global_hvp.value();

  std::vector<ParamVector> out;
  out.reserve(participants.size());
  for (std::size_t i = 0; i < participants.size(); ++i) {
    const ClientBatches& batches = clients[participants[i]];
    const double steps = static_cast<double>(epochs * batches.size());
    const double coeff = steps * steps * eta * eta / 4.0;
    const ParamVector client_term = 2.0 * models::mean_hvp(batches, w0, client_grad[i]);
    out.push_back(coeff * (client_term - global_term));
  }
  return out;
}

ParamVector sam_step(const models::BatchLoss& batch, const ParamVector& w, double eta, double eps) {
  if (!(eps >= 0.0)) throw DomainError("SAM radius must be >= 0");
  const ParamVector g = batch.grad(w);
  const ParamVector perturbed = w + eps * g;
  return w - eta * batch.grad(perturbed);
}

ParamVector scaffold_local_step(const models::BatchLoss& batch, const ParamVector& w, double eta,
                                const ParamVector& client_variate,
                                const ParamVector& server_variate) {
  if (client_variate.size() != w.size() || server_variate.size() != w.size())
    throw ConfigError("control variate dimension mismatch");
  // The variate difference is formed first so that c_j == c reduces to plain SGD bit-for-bit.
  const ParamVector shift = server_variate - client_variate;
  return w - eta * (batch.grad(w) + shift);
}

ControlVariates ideal_variates(std::span<const ClientBatches> clients, const ParamVector& w) {
  ControlVariates cv;
  models::RunningMean mean(w.size());
  for (const auto& c : clients) {
    cv.client.push_back(models::mean_grad(c, w));
    mean.add(cv.client.back());
  }
  cv.server = mean.value();
  return cv;
}

namespace {

struct LocalOutcome {
  ParamVector w;
  double eps_sum = 0.0;
  std::size_t eps_count = 0;
};

using ClientRunner = std::function<LocalOutcome(std::size_t client, const ScheduleSource&)>;

// Runs every participant from the shared round-start state and averages.
RoundResult federated_round(const FederationState& state, const FederationConfig& cfg,
                            const ClientRunner& runner,
                            const std::function<void(std::size_t, ParamVector&)>& post = {}) {
  const auto& clients = *state.clients;
  const std::uint64_t round = state.round + 1;
  RoundResult result;
  result.participants = sample_participants(clients.size(), cfg.participation, round, cfg.seed);
  const auto& ids = result.participants;

  std::vector<LocalOutcome> outcomes(ids.size());
  parallel_for(ids.size(), cfg.threads, [&](std::size_t i) {
    const std::size_t j = ids[i];
    outcomes[i] = runner(j, client_schedule(clients[j].size(), round, j, cfg.seed));
    if (post) post(i, outcomes[i].w);
  });

  models::RunningMean mean(state.w.size());
  double eps_sum = 0.0;
  std::size_t eps_count = 0;
  for (const auto& o : outcomes) {
    mean.add(o.w);
    eps_sum += o.eps_sum;
    eps_count += o.eps_count;
  }
  result.state = state;
  result.state.w = mean.value();
  result.state.round = round;
  if (eps_count > 0) result.epsilon_mean = eps_sum / static_cast<double>(eps_count);
  if (!result.state.w.allFinite())
    throw DivergenceError("aggregated parameter is non-finite in round " + std::to_string(round),
                          -1);
  return result;
}

}  // namespace

RoundResult fedavg_round(const FederationState& state, const FederationConfig& cfg) {
  const auto& clients = *state.clients;
  return federated_round(state, cfg, [&](std::size_t j, const ScheduleSource& sched) {
    return LocalOutcome{local_sgd_round(clients[j], state.w, cfg.eta, cfg.local_epochs, sched)};
  });
}

RoundResult fedavg_no_dispersion_round(const FederationState& state, const FederationConfig& cfg) {
  const auto& clients = *state.clients;
  const std::uint64_t round = state.round + 1;
  const auto ids = sample_participants(clients.size(), cfg.participation, round, cfg.seed);
  const auto corrections = dispersion_correction(clients, ids, state.w, cfg.local_epochs, cfg.eta);
  return federated_round(
      state, cfg,
      [&](std::size_t j, const ScheduleSource& sched) {
        return LocalOutcome{local_sgd_round(clients[j], state.w, cfg.eta, cfg.local_epochs, sched)};
      },
      [&](std::size_t i, ParamVector& w) { w -= corrections[i]; });
}

RoundResult fedsam_round(const FederationState& state, const FederationConfig& cfg) {
  const auto& clients = *state.clients;
  const std::uint64_t round = state.round + 1;
  return federated_round(state, cfg, [&](std::size_t j, const ScheduleSource& sched) {
    const double steps = static_cast<double>(cfg.local_epochs * clients[j].size());
    const EpsilonPolicy policy = cfg.eps_policy.resolved(steps, cfg.eta);
    LocalOutcome out;
    out.w = local_round(clients[j], state.w, cfg.local_epochs, sched,
                        [&](const models::BatchLoss& b, const ParamVector& w) -> ParamVector {
                          const ParamVector g = b.grad(w);
                          const double eps = sam_epsilon(g, policy, round);
                          out.eps_sum += eps;
                          ++out.eps_count;
                          const ParamVector perturbed = w + eps * g;
                          return w - cfg.eta * b.grad(perturbed);
                        });
    return out;
  });
}

RoundResult scaffold_round(const FederationState& state, const FederationConfig& cfg) {
  const auto& clients = *state.clients;
  ControlVariates cv;
  if (state.variates) {
    cv = *state.variates;
  } else {
    cv.server = ParamVector::Zero(state.w.size());
    cv.client.assign(clients.size(), ParamVector::Zero(state.w.size()));
  }
  RoundResult r = federated_round(state, cfg, [&](std::size_t j, const ScheduleSource& sched) {
    const ParamVector& cj = cv.client[j];
    return LocalOutcome{local_round(
        clients[j], state.w, cfg.local_epochs, sched,
        [&](const models::BatchLoss& b, const ParamVector& w) -> ParamVector {
          return scaffold_local_step(b, w, cfg.eta, cj, cv.server);
        })};
  });
  r.state.variates = ideal_variates(clients, r.state.w);
  return r;
}

RoundResult central_sgd_epoch(const FederationState& state, const FederationConfig& cfg) {
  const auto& clients = *state.clients;
  ClientBatches all;
  for (const auto& c : clients) all.insert(all.end(), c.begin(), c.end());
  const std::uint64_t round = state.round + 1;
  RoundResult result;
  result.state = state;
  result.state.w = local_sgd_round(all, state.w, cfg.eta, cfg.local_epochs,
                                   client_schedule(all.size(), round, 0, cfg.seed));
  result.state.round = round;
  for (std::size_t j = 0; j < clients.size(); ++j) result.participants.push_back(j);
  return result;
}

RoundResult run_round(const FederationState& state, const FederationConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::kFedAvg:
      return fedavg_round(state, cfg);
    case Algorithm::kFedAvgNoDispersion:
      return fedavg_no_dispersion_round(state, cfg);
    case Algorithm::kFedSam:
      return fedsam_round(state, cfg);
    case Algorithm::kScaffold:
      return scaffold_round(state, cfg);
    case Algorithm::kCentralSgd:
      return central_sgd_epoch(state, cfg);
  }
  throw ConfigError("unhandled algorithm");
}

}  // namespace fedbea::fed
