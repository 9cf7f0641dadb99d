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

#include "fedbea/bea.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedbea/errors.hpp"
#include "fedbea/fedcore.hpp"
#include "fedbea/parallel.hpp"
#include "fedbea/rng.hpp"

namespace fedbea::bea {

namespace {

using models::mean_grad;
using models::mean_hvp;
using models::RunningMean;

void require_clients(Clients clients) {
  if (clients.empty()) throw ConfigError("at least one client is required");
  for (const auto& c : clients)
    if (c.empty()) throw ConfigError("every client needs at least one batch");
}

std::vector<ParamVector> client_grads(Clients clients, const ParamVector& w) {
  std::vector<ParamVector> out;
  out.reserve(clients.size());
  for (const auto& c : clients) out.push_back(mean_grad(c, w));
  return out;
}

ParamVector mean_of(std::span<const ParamVector> xs) {
  RunningMean acc(xs.front().size());
  for (const auto& x : xs) acc.add(x);
  return acc.value();
}

// H(w) v for the global loss (mean of client Hessians).
ParamVector global_hvp(Clients clients, const ParamVector& w, const ParamVector& v) {
  RunningMean acc(w.size());
  for (const auto& c : clients) acc.add(mean_hvp(c, w, v));
  return acc.value();
}

double mean_squared_distance(std::span<const ParamVector> xs, const ParamVector& center) {
  double sum = 0.0;
  for (const auto& x : xs) sum += (center - x).squaredNorm();
  return sum / static_cast<double>(xs.size());
}

void check_eta(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be finite and >= 0");
}

void check_steps(double steps) {
  if (!(steps >= 1.0) || !std::isfinite(steps)) throw ConfigError("E must be >= 1");
}

void warn_step_size(ModifiedLossReport& r) {
  if (r.eta * r.local_steps > 0.5)
    r.warnings.push_back("eta * E exceeds 0.5; the expansion is outside its regime");
}

ModifiedLossReport base_report(std::string algorithm, Clients clients, const ParamVector& w,
                               double eta, double local_steps) {
  require_clients(clients);
  check_eta(eta);
  check_steps(local_steps);
  ModifiedLossReport r;
  r.algorithm = std::move(algorithm);
  r.base_loss = global_loss(clients, w);
  r.eta = eta;
  r.local_steps = local_steps;
  r.steps_per_epoch = local_steps;
  warn_step_size(r);
  return r;
}

}  // namespace

double global_loss(Clients clients, const ParamVector& w) {
  require_clients(clients);
  double sum = 0.0;
  for (const auto& c : clients) sum += models::mean_loss(c, w);
  return sum / static_cast<double>(clients.size());
}

ParamVector global_grad(Clients clients, const ParamVector& w) {
  require_clients(clients);
  const auto grads = client_grads(clients, w);
  return mean_of(grads);
}

double dispersion_term(Clients clients, const ParamVector& w) {
  require_clients(clients);
  const auto grads = client_grads(clients, w);
  return mean_squared_distance(grads, mean_of(grads));
}

double sgd_term(Clients clients, const ParamVector& w) {
  require_clients(clients);
  double total = 0.0;
  for (const auto& c : clients) {
    double client = 0.0;
    for (const auto& b : c) client += b->grad(w).squaredNorm();
    total += client / static_cast<double>(c.size());
  }
  return total / static_cast<double>(clients.size());
}

double scaffold_batch_term(Clients clients, const ParamVector& w) {
  require_clients(clients);
  double total = 0.0;
  for (const auto& c : clients) {
    std::vector<ParamVector> grads;
    for (const auto& b : c) grads.push_back(b->grad(w));
    total += mean_squared_distance(grads, mean_of(grads));
  }
  return total / static_cast<double>(clients.size());
}

double transformed_dispersion_term(Clients clients, const ParamVector& w, std::size_t epochs,
                                   double eta) {
  require_clients(clients);
  check_eta(eta);
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  const auto grads = client_grads(clients, w);
  double total = 0.0;
  for (std::size_t j = 0; j < clients.size(); ++j) {
    const double shift =
        static_cast<double>(epochs * clients[j].size()) * eta / 3.0;
    const ParamVector wj = w - shift * grads[j];
    const ParamVector diff = global_grad(clients, wj) - mean_grad(clients[j], wj);
    total += diff.squaredNorm();
  }
  return total / static_cast<double>(clients.size());
}

double secondary_dispersion_term(Clients clients, const ParamVector& w) {
  require_clients(clients);
  const auto grads = client_grads(clients, w);
  const ParamVector g = mean_of(grads);
  double total = 0.0;
  for (const auto& gj : grads) {
    const ParamVector z = g - gj;
    total += z.dot(global_hvp(clients, w, z));
  }
  return total / static_cast<double>(clients.size());
}

double ModifiedLossReport::value() const {
  const auto& c = coefficients;
  return base_loss + c.dispersion * dispersion + c.sgd * sgd_term + c.sam_penalty * sam_penalty +
         c.gd_penalty * gd_penalty + c.scaffold_batch * scaffold_batch_term +
         c.transformed_dispersion * transformed_dispersion +
         c.secondary_dispersion * secondary_dispersion;
}

ModifiedLossReport modified_loss_fedavg(Clients clients, const ParamVector& w, double eta,
                                        double local_steps) {
  auto r = base_report("fedavg", clients, w, eta, local_steps);
  r.dispersion = dispersion_term(clients, w);
  r.sgd_term = sgd_term(clients, w);
  r.coefficients.dispersion = -local_steps * eta / 4.0;
  r.coefficients.sgd = eta / 4.0;
  return r;
}

ModifiedLossReport modified_loss_fedavg_partial(std::span<const std::vector<ClientBatches>> groups,
                                                const ParamVector& w, double eta,
                                                double local_steps) {
  if (groups.empty()) throw ConfigError("at least one round-group is required");
  ModifiedLossReport r;
  r.algorithm = "fedavg-partial";
  double base = 0.0, disp = 0.0, sgd = 0.0;
  for (const auto& g : groups) {
    const auto single = modified_loss_fedavg(g, w, eta, local_steps);
    base += single.base_loss;
    disp += single.dispersion;
    sgd += single.sgd_term;
    r.coefficients = single.coefficients;
  }
  const double n = static_cast<double>(groups.size());
  r.base_loss = base / n;
  r.dispersion = disp / n;
  r.sgd_term = sgd / n;
  r.eta = eta;
  r.local_steps = local_steps;
  r.steps_per_epoch = local_steps;
  r.groups = groups.size();
  warn_step_size(r);
  return r;
}

ModifiedLossReport modified_loss_fedsam(Clients clients, const ParamVector& w, double eta,
                                        double local_steps, double eps) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw DomainError("epsilon must be finite and >= 0");
  auto r = base_report("fedsam", clients, w, eta, local_steps);
  r.epsilon = eps;
  r.dispersion = dispersion_term(clients, w);
  r.sgd_term = sgd_term(clients, w);
  r.sam_penalty = global_grad(clients, w).squaredNorm();
  r.scaffold_batch_term = scaffold_batch_term(clients, w);
  r.coefficients.sam_penalty = eps / 2.0;
  r.coefficients.dispersion = eps / 2.0 - local_steps * eta / 4.0;
  r.coefficients.scaffold_batch = eps / 2.0;
  r.coefficients.sgd = eta / 4.0;
  r.notes.push_back("scaffold_batch coefficient eps/2 is as-printed, unverified derivation");
  r.notes.push_back("the eps-independent sgd term is carried over from the FedAvg loss");
  return r;
}

ModifiedLossReport modified_loss_scaffold(Clients clients, const ParamVector& w, double eta,
                                          double local_steps) {
  auto r = base_report("scaffold", clients, w, eta, local_steps);
  r.gd_penalty = global_grad(clients, w).squaredNorm();
  r.scaffold_batch_term = scaffold_batch_term(clients, w);
  r.coefficients.gd_penalty = eta / 4.0;
  r.coefficients.scaffold_batch = eta / 4.0;
  r.coefficients.dispersion = 0.0;
  return r;
}

ModifiedLossReport modified_loss_fedavg_second_order(Clients clients, const ParamVector& w,
                                                     std::size_t epochs,
                                                     double steps_per_epoch, double eta) {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(steps_per_epoch >= 1.0)) throw ConfigError("K must be >= 1");
  const double e = static_cast<double>(epochs) * steps_per_epoch;
  auto r = base_report("fedavg-second-order", clients, w, eta, e);
  r.epochs = epochs;
  r.steps_per_epoch = steps_per_epoch;
  r.transformed_dispersion = transformed_dispersion_term(clients, w, epochs, eta);
  r.secondary_dispersion = secondary_dispersion_term(clients, w);
  r.coefficients.transformed_dispersion = -e * eta / 4.0;
  r.coefficients.secondary_dispersion = e * e * eta * eta / 6.0;
  if (epochs < 2) r.warnings.push_back("the second-order form assumes many local epochs");
  return r;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFedAvg:
      return "fedavg";
    case Variant::kFedAvgNoDispersion:
      return "fedavg-no-dispersion";
    case Variant::kScaffold:
      return "scaffold";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::kFedAvg, Variant::kFedAvgNoDispersion, Variant::kScaffold})
    if (to_string(v) == name) return v;
  throw ConfigError("unknown variant '" + name + "'");
}

ParamVector expected_round_update_prediction(Clients clients, const ParamVector& w0, double eta,
                                             Variant variant) {
  require_clients(clients);
  check_eta(eta);
  const auto grads = client_grads(clients, w0);
  const ParamVector g = mean_of(grads);
  // grad ||grad L||^2 = 2 H grad L.
  const ParamVector grad_global_sq = 2.0 * global_hvp(clients, w0, g);

  RunningMean first(w0.size());
  RunningMean second(w0.size());
  for (std::size_t j = 0; j < clients.size(); ++j) {
    const ClientBatches& batches = clients[j];
    const double e = static_cast<double>(batches.size());
    ParamVector batch_sum = ParamVector::Zero(w0.size());
    switch (variant) {
      case Variant::kFedAvg:
      case Variant::kFedAvgNoDispersion: {
        for (const auto& b : batches) batch_sum += 2.0 * b->hvp(w0, b->grad(w0));
        const ParamVector client_sq = variant == Variant::kFedAvg
                                          ? ParamVector(2.0 * mean_hvp(batches, w0, grads[j]))
                                          : grad_global_sq;
        first.add(e * grads[j]);
        second.add(e * e * client_sq - batch_sum);
        break;
      }
      case Variant::kScaffold: {
        // sum_k grad ||grad L_j - g_jk||^2 = 2 sum_k (H_j - H_jk)(grad L_j - g_jk).
        for (const auto& b : batches) {
          const ParamVector z = grads[j] - b->grad(w0);
          batch_sum += 2.0 * (mean_hvp(batches, w0, z) - b->hvp(w0, z));
        }
        first.add(e * g);
        second.add(e * (e - 1.0) * grad_global_sq - batch_sum);
        break;
      }
    }
  }
  return w0 - eta * first.value() + (eta * eta / 4.0) * second.value();
}

ParamVector expected_xi(const ClientBatches& batches, const ParamVector& w0) {
  if (batches.empty()) throw ConfigError("client needs at least one batch");
  std::vector<ParamVector> g;
  for (const auto& b : batches) g.push_back(b->grad(w0));
  ParamVector out = ParamVector::Zero(w0.size());
  for (std::size_t k = 0; k < batches.size(); ++k) {
    ParamVector others = ParamVector::Zero(w0.size());
    for (std::size_t l = 0; l < batches.size(); ++l)
      if (l != k) others += g[l];
    out += batches[k]->hvp(w0, others);
  }
  return 0.5 * out;
}

namespace {

struct ClientPlan {
  // Constant shift added to every gradient (SCAFFOLD c - c_j), if any.
  std::optional<ParamVector> shift;
  // Subtracted from the final local parameter by the dispersion-free variant.
  std::optional<ParamVector> correction;
};

std::vector<ClientPlan> make_plans(Clients clients, const ParamVector& w0, double eta,
                                   const OracleOptions& opts) {
  std::vector<ClientPlan> plans(clients.size());
  if (opts.variant == Variant::kFedAvgNoDispersion) {
    std::vector<std::size_t> ids(clients.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    auto corr = fed::dispersion_correction(clients, ids, w0, 1, eta);
    for (std::size_t j = 0; j < clients.size(); ++j) plans[j].correction = std::move(corr[j]);
  } else if (opts.variant == Variant::kScaffold) {
    const ParamVector& anchor = opts.variate_anchor ? *opts.variate_anchor : w0;
    if (anchor.size() != w0.size()) throw ConfigError("variate anchor dimension mismatch");
    const auto cv = fed::ideal_variates(clients, anchor);
    for (std::size_t j = 0; j < clients.size(); ++j)
      plans[j].shift = ParamVector(cv.server - cv.client[j]);
  }
  return plans;
}

ParamVector run_order(const ClientBatches& batches, std::span<const std::size_t> order,
                      const ParamVector& w0, double eta, const ClientPlan& plan) {
  ParamVector w = w0;
  for (std::size_t k : order) {
    if (plan.shift)
      w = w - eta * (batches[k]->grad(w) + *plan.shift);
    else
      w = w - eta * batches[k]->grad(w);
  }
  if (plan.correction) w -= *plan.correction;
  return w;
}

std::uint64_t factorial(std::size_t n) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace

PermutationOracleReport brute_force_expected_update(Clients clients, const ParamVector& w0,
                                                    double eta, const OracleOptions& opts) {
  require_clients(clients);
  check_eta(eta);
  for (const auto& c : clients)
    if (c.size() > kMaxEnumeratedSteps)
      throw CapabilityError("exact enumeration supports at most " +
                            std::to_string(kMaxEnumeratedSteps) + " local steps per client (got " +
                            std::to_string(c.size()) + "); use the Monte Carlo estimator instead");
  const auto plans = make_plans(clients, w0, eta, opts);

  PermutationOracleReport report;
  report.per_order_updates.resize(clients.size());
  std::vector<ParamVector> client_means(clients.size());
  std::vector<ParamVector> client_xi(clients.size());

  parallel_for(clients.size(), opts.threads, [&](std::size_t j) {
    const ClientBatches& batches = clients[j];
    const std::size_t e = batches.size();
    std::vector<ParamVector> g;
    for (const auto& b : batches) g.push_back(b->grad(w0));
    std::vector<std::size_t> order(e);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RunningMean updates(w0.size());
    RunningMean xi(w0.size());
    do {
      ParamVector w = run_order(batches, order, w0, eta, plans[j]);
      updates.add(w);
      if (opts.keep_orders) report.per_order_updates[j].push_back(std::move(w));
      // xi = sum_k H_{pi(k)} sum_{l<k} g_{pi(l)} at w0.
      ParamVector prefix = ParamVector::Zero(w0.size());
      ParamVector x = ParamVector::Zero(w0.size());
      for (std::size_t pos = 0; pos < e; ++pos) {
        if (pos > 0) x += batches[order[pos]]->hvp(w0, prefix);
        prefix += g[order[pos]];
      }
      xi.add(x);
    } while (std::next_permutation(order.begin(), order.end()));
    client_means[j] = updates.value();
    client_xi[j] = xi.value() - expected_xi(batches, w0);
  });

  report.expected_update = mean_of(client_means);
  report.xi_mean_discrepancy = mean_of(client_xi);
  for (const auto& c : clients) report.orders_enumerated += factorial(c.size());
  return report;
}

MonteCarloEstimate monte_carlo_expected_update(Clients clients, const ParamVector& w0,
                                               double eta, std::size_t trials,
                                               std::uint64_t seed, const OracleOptions& opts) {
  require_clients(clients);
  check_eta(eta);
  if (trials < 100) throw ConfigError("Monte Carlo estimation needs at least 100 trials");
  const auto plans = make_plans(clients, w0, eta, opts);

  std::vector<ParamVector> samples(trials);
  parallel_for(trials, opts.threads, [&](std::size_t t) {
    RunningMean round(w0.size());
    for (std::size_t j = 0; j < clients.size(); ++j) {
      Engine eng = make_engine(seed, Stream::kMonteCarlo, {t, j});
      const auto order = random_permutation(eng, clients[j].size());
      round.add(run_order(clients[j], order, w0, eta, plans[j]));
    }
    samples[t] = round.value();
  });

  MonteCarloEstimate est;
  est.trials = trials;
  est.mean = mean_of(samples);
  ParamVector var = ParamVector::Zero(w0.size());
  for (const auto& s : samples) var += (s - est.mean).cwiseAbs2();
  var /= static_cast<double>(trials - 1);
  est.stderr_ = (var / static_cast<double>(trials)).cwiseSqrt();
  return est;
}

std::string OrderFit::tag() const {
  if (exact) return "exact";
  return std::to_string(exponent.value_or(0.0));
}

OrderFit residual_order_fit(std::span<const std::pair<double, double>> gaps) {
  constexpr double kExactGap = 1e-13;
  if (gaps.size() < 2) throw DomainError("order fit needs at least two (eta, gap) points");
  std::size_t zero = 0;
  for (const auto& [eta, gap] : gaps) {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("eta values must be positive");
    if (!(gap >= 0.0) || !std::isfinite(gap)) throw DomainError("gaps must be finite and >= 0");
    if (gap <= kExactGap) ++zero;
  }
  OrderFit fit;
  if (zero == gaps.size()) {
    fit.exact = true;
    return fit;
  }
  if (zero > 0) throw DomainError("gaps mix exact-zero and non-zero values");
  double mx = 0.0, my = 0.0;
  for (const auto& [eta, gap] : gaps) {
    mx += std::log(eta);
    my += std::log(gap);
  }
  const double n = static_cast<double>(gaps.size());
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [eta, gap] : gaps) {
    const double dx = std::log(eta) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(gap) - my);
  }
  if (!(sxx > 0.0)) throw DomainError("order fit needs at least two distinct eta values");
  fit.exponent = sxy / sxx;
  return fit;
}

ParamVector gradient_flow_field(Clients clients, const ParamVector& w) {
  return -global_grad(clients, w);
}

ParamVector modified_flow_field(Clients clients, const ParamVector& w, double eta,
                                double local_steps) {
  require_clients(clients);
  const auto grads = client_grads(clients, w);
  const ParamVector g = mean_of(grads);
  // grad D = (2/m) sum_j (H - H_j)(g - g_j).
  RunningMean grad_d(w.size());
  for (std::size_t j = 0; j < clients.size(); ++j) {
    const ParamVector z = g - grads[j];
    grad_d.add(2.0 * (global_hvp(clients, w, z) - mean_hvp(clients[j], w, z)));
  }
  // grad S = (1/m) sum_j mean_k 2 H_jk g_jk.
  RunningMean grad_s(w.size());
  for (const auto& c : clients) {
    RunningMean client(w.size());
    for (const auto& b : c) client.add(2.0 * b->hvp(w, b->grad(w)));
    grad_s.add(client.value());
  }
  return -g + (local_steps * eta / 4.0) * grad_d.value() - (eta / 4.0) * grad_s.value();
}

ParamVector integrate_flow(const VectorField& field, const ParamVector& w0, double duration,
                           std::size_t steps) {
  if (steps < 1) throw ConfigError("integration needs at least one step");
  const double h = duration / static_cast<double>(steps);
  ParamVector w = w0;
  for (std::size_t i = 0; i < steps; ++i) {
    const ParamVector k1 = field(w);
    const ParamVector k2 = field(w + 0.5 * h * k1);
    const ParamVector k3 = field(w + 0.5 * h * k2);
    const ParamVector k4 = field(w + h * k3);
    w += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return w;
}

FlowDeviationTrace flow_deviation(std::span<const ParamVector> trajectory,
                                  std::span<const ParamVector> reference) {
  if (trajectory.size() != reference.size())
    throw DomainError("trajectory and reference lengths differ (" +
                      std::to_string(trajectory.size()) + " vs " +
                      std::to_string(reference.size()) + ")");
  FlowDeviationTrace trace;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    if (trajectory[i].size() != reference[i].size())
      throw DomainError("dimension mismatch at entry " + std::to_string(i));
    trace.deviation.push_back((trajectory[i] - reference[i]).norm());
  }
  return trace;
}

nlohmann::json to_json(const ModifiedLossReport& r) {
  const auto& c = r.coefficients;
  return {
      {"algorithm", r.algorithm},
      {"value", r.value()},
      {"terms",
       {{"base_loss", r.base_loss},
        {"dispersion", r.dispersion},
        {"sgd_term", r.sgd_term},
        {"sam_penalty", r.sam_penalty},
        {"gd_penalty", r.gd_penalty},
        {"scaffold_batch_term", r.scaffold_batch_term},
        {"transformed_dispersion", r.transformed_dispersion},
        {"secondary_dispersion", r.secondary_dispersion}}},
      {"coefficients",
       {{"dispersion", c.dispersion},
        {"sgd_term", c.sgd},
        {"sam_penalty", c.sam_penalty},
        {"gd_penalty", c.gd_penalty},
        {"scaffold_batch_term", c.scaffold_batch},
        {"transformed_dispersion", c.transformed_dispersion},
        {"secondary_dispersion", c.secondary_dispersion}}},
      {"parameters",
       {{"eta", r.eta},
        {"E", r.local_steps},
        {"a", r.epochs},
        {"K", r.steps_per_epoch},
        {"epsilon", r.epsilon},
        {"groups", r.groups}}},
      {"notes", r.notes},
      {"warnings", r.warnings},
  };
}

namespace {
std::vector<double> to_std(const ParamVector& v) { return {v.data(), v.data() + v.size()}; }
}  // namespace

nlohmann::json to_json(const PermutationOracleReport& r) {
  nlohmann::json orders = nlohmann::json::array();
  for (const auto& client : r.per_order_updates) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& w : client) list.push_back(to_std(w));
    orders.push_back(std::move(list));
  }
  return {{"expected_update", to_std(r.expected_update)},
          {"per_order_updates", std::move(orders)},
          {"xi_mean_discrepancy", to_std(r.xi_mean_discrepancy)},
          {"orders_enumerated", r.orders_enumerated}};
}

nlohmann::json to_json(const OrderFit& f) {
  nlohmann::json j = {{"exact", f.exact}, {"tag", f.exact ? "exact" : "fitted"}};
  j["exponent"] = f.exponent ? nlohmann::json(*f.exponent) : nlohmann::json(nullptr);
  return j;
}

}  // namespace fedbea::bea
