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

#ifndef FEDBEA_BEA_HPP_
#define FEDBEA_BEA_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedbea/data.hpp"
#include "fedbea/types.hpp"

namespace fedbea::bea {

using data::ClientBatches;
using Clients = std::span<const ClientBatches>;

// Raw (coefficient-free) regularizer terms. Each client's batch list is one
// local epoch; sums over local steps are therefore means over batches.

// (1/m) sum_j ||grad L(w) - grad L_j(w)||^2.
double dispersion_term(Clients clients, const ParamVector& w);
// (1/m) sum_j mean_k ||grad L_jk(w)||^2.
double sgd_term(Clients clients, const ParamVector& w);
// (1/m) sum_j mean_k ||grad L_j(w) - grad L_jk(w)||^2.
double scaffold_batch_term(Clients clients, const ParamVector& w);
// (1/m) sum_j ||grad L(w'_j) - grad L_j(w'_j)||^2, w'_j = w - (a K_j eta / 3) grad L_j(w).
double transformed_dispersion_term(Clients clients, const ParamVector& w, std::size_t epochs,
                                   double eta);
// (1/m) sum_j z_j^T H(w) z_j with z_j = grad L(w) - grad L_j(w).
double secondary_dispersion_term(Clients clients, const ParamVector& w);

// Mean over clients of the client mean loss.
double global_loss(Clients clients, const ParamVector& w);
ParamVector global_grad(Clients clients, const ParamVector& w);

struct TermCoefficients {
  double dispersion = 0.0;
  double sgd = 0.0;
  double sam_penalty = 0.0;
  double gd_penalty = 0.0;
  double scaffold_batch = 0.0;
  double transformed_dispersion = 0.0;
  double secondary_dispersion = 0.0;
};

struct ModifiedLossReport {
  std::string algorithm;
  double base_loss = 0.0;
  double dispersion = 0.0;
  double sgd_term = 0.0;
  double sam_penalty = 0.0;     // ||grad L||^2 (FedSAM)
  double gd_penalty = 0.0;      // ||grad L||^2 (SCAFFOLD)
  double scaffold_batch_term = 0.0;
  double transformed_dispersion = 0.0;
  double secondary_dispersion = 0.0;
  TermCoefficients coefficients;
  double eta = 0.0;
  double local_steps = 0.0;  // E
  std::size_t epochs = 1;    // a
  double steps_per_epoch = 0.0;  // K
  double epsilon = 0.0;
  std::size_t groups = 1;
  std::vector<std::string> notes;
  std::vector<std::string> warnings;

  // base_loss plus every coefficient times its term.
  double value() const;
};

// L - (E eta / 4) D + (eta / 4) S.
ModifiedLossReport modified_loss_fedavg(Clients clients, const ParamVector& w, double eta,
                                        double local_steps);
// Averages the FedAvg terms over n round-groups of participating clients.
ModifiedLossReport modified_loss_fedavg_partial(std::span<const std::vector<ClientBatches>> groups,
                                                const ParamVector& w, double eta,
                                                double local_steps);
// L + (eps/2)||grad L||^2 - (E eta/4 - eps/2) D + (eps/2) B + (eta/4) S.
ModifiedLossReport modified_loss_fedsam(Clients clients, const ParamVector& w, double eta,
                                        double local_steps, double eps);
// L + (eta/4)||grad L||^2 + (eta/4) B.
ModifiedLossReport modified_loss_scaffold(Clients clients, const ParamVector& w, double eta,
                                          double local_steps);
// L - (a K eta / 4) T + (a^2 K^2 eta^2 / 6) Sec.
ModifiedLossReport modified_loss_fedavg_second_order(Clients clients, const ParamVector& w,
                                                     std::size_t epochs,
                                                     double steps_per_epoch, double eta);

enum class Variant { kFedAvg, kFedAvgNoDispersion, kScaffold };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

// Second-order expected one-round update. Each client runs one pass over
// its batch list (E_j = number of batches).
ParamVector expected_round_update_prediction(Clients clients, const ParamVector& w0, double eta,
                                             Variant variant);

struct OracleOptions {
  Variant variant = Variant::kFedAvg;
  // SCAFFOLD: point at which the ideal variates are evaluated (default w0).
  std::optional<ParamVector> variate_anchor;
  bool keep_orders = true;
  std::size_t threads = 1;
};

struct PermutationOracleReport {
  ParamVector expected_update;
  // per_order_updates[j][o]: client j's final parameter under its o-th order
  // (lexicographic).
  std::vector<std::vector<ParamVector>> per_order_updates;
  ParamVector xi_mean_discrepancy;
  std::uint64_t orders_enumerated = 0;  // sum over clients of E_j!
};

inline constexpr std::size_t kMaxEnumeratedSteps = 6;

// Exact expectation over batch orders, enumerated per client and averaged
// over clients. Throws CapabilityError if some client has more than six
// batches.
PermutationOracleReport brute_force_expected_update(Clients clients, const ParamVector& w0,
                                                    double eta, const OracleOptions& opts = {});

// Closed-form E[xi_j] = (1/2) sum_k sum_{l != k} H_jk g_jl at w0.
ParamVector expected_xi(const ClientBatches& batches, const ParamVector& w0);

struct MonteCarloEstimate {
  ParamVector mean;
  ParamVector stderr_;
  std::size_t trials = 0;
};

// Sample mean over `trials` uniformly random order draws per client.
// Throws ConfigError if trials < 100.
MonteCarloEstimate monte_carlo_expected_update(Clients clients, const ParamVector& w0,
                                               double eta, std::size_t trials,
                                               std::uint64_t seed,
                                               const OracleOptions& opts = {});

struct OrderFit {
  std::optional<double> exponent;  // empty when exact
  bool exact = false;
  std::string tag() const;
};

// Least-squares slope of log(gap) against log(eta). Every gap at or below
// 1e-13 means the "exact" tag. Throws DomainError for fewer than two points,
// non-positive eta, or a mix of zero and non-zero gaps.
OrderFit residual_order_fit(std::span<const std::pair<double, double>> gaps);

// Vector field of the FedAvg modified flow, -grad of the modified loss:
//   -grad L + (E eta / 4) grad D - (eta / 4) grad S,
// assembled from Hessian-vector products.
ParamVector modified_flow_field(Clients clients, const ParamVector& w, double eta,
                                double local_steps);
// Plain gradient flow field -grad L.
ParamVector gradient_flow_field(Clients clients, const ParamVector& w);

using VectorField = std::function<ParamVector(const ParamVector&)>;

// Classical RK4 from w0 over time `duration` with `steps` equal steps.
ParamVector integrate_flow(const VectorField& field, const ParamVector& w0, double duration,
                           std::size_t steps);

struct FlowDeviationTrace {
  std::vector<double> deviation;
};

// Per-entry Euclidean distance. Throws DomainError on length or dimension
// mismatch.
FlowDeviationTrace flow_deviation(std::span<const ParamVector> trajectory,
                                  std::span<const ParamVector> reference);

nlohmann::json to_json(const ModifiedLossReport& r);
nlohmann::json to_json(const PermutationOracleReport& r);
nlohmann::json to_json(const OrderFit& f);

}  // namespace fedbea::bea

#endif  // FEDBEA_BEA_HPP_
