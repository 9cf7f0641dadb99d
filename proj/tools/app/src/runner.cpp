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

#include "fedbea/app/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include "fedbea/analysis.hpp"
#include "fedbea/bea.hpp"
#include "fedbea/errors.hpp"

namespace fedbea::app {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kExactTolerance = 1e-12;
constexpr double kOrderLow = 2.9;
constexpr double kOrderHigh = 3.1;
constexpr const char* kVersion = "0.1.0";

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

json manifest(const AppConfig& cfg, const std::string& command, const RunOptions& opts,
              const json& outputs) {
  return {{"artifact", "fedbea"},
          {"version", kVersion},
          {"command", command},
          {"seed", cfg.seed},
          {"config", to_json(cfg)},
          {"started_at", opts.clock ? opts.clock() : utc_timestamp()},
          {"outputs", outputs}};
}

models::ModelPtr make_model(const TaskConfig& t, int classes, Eigen::Index features) {
  if (t.model == models::ObjectiveKind::kSmoothMlp)
    return std::make_shared<models::SmoothMlpModel>(classes, features, t.hidden);
  return std::make_shared<models::SoftmaxLinearModel>(classes, features);
}

std::vector<models::BatchPtr> flatten(const Task& task) {
  std::vector<models::BatchPtr> all;
  for (const auto& c : task.clients) all.insert(all.end(), c.begin(), c.end());
  return all;
}

}  // namespace

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Task build_task(const AppConfig& cfg) {
  Task task;
  task.kind = cfg.task.kind;
  if (cfg.task.kind == TaskKind::kQuadratic) {
    data::QuadraticTaskSpec spec;
    spec.num_clients = cfg.m;
    spec.batches_per_client = cfg.K.value_or(1);
    spec.dimension = cfg.task.dimension;
    spec.heterogeneity = cfg.heterogeneity;
    spec.within_spread = cfg.task.within_spread;
    spec.shared_curvature = cfg.task.shared_curvature;
    spec.min_eigenvalue = cfg.task.min_eigenvalue;
    spec.max_eigenvalue = cfg.task.max_eigenvalue;
    spec.seed = cfg.seed;
    task.clients = data::synth_quadratic_tasks(spec);
    task.w0 = ParamVector::Zero(cfg.task.dimension);
    return task;
  }

  Dataset ds;
  if (cfg.task.kind == TaskKind::kBlobs) {
    data::BlobSpec spec;
    spec.num_clients = cfg.m;
    spec.num_classes = cfg.task.classes;
    spec.num_features = cfg.task.features;
    spec.num_examples = cfg.task.examples;
    spec.alpha = cfg.alpha;
    spec.separation = cfg.task.separation;
    spec.noise = cfg.task.noise;
    spec.seed = cfg.seed;
    ds = data::synth_blobs(spec).dataset;
  } else {
    ds = data::load_csv_dataset(cfg.task.path);
  }
  auto shared = std::make_shared<const Dataset>(std::move(ds));
  task.dataset = shared;
  task.model = make_model(cfg.task, shared->num_classes, shared->num_features());
  const auto shards = data::dirichlet_partition(*shared, {cfg.m, cfg.alpha, cfg.seed});
  for (const auto& shard : shards) {
    auto batches = data::shard_batches(shared, shard, cfg.batch_size, cfg.seed);
    if (cfg.K && batches.size() > *cfg.K) batches.resize(*cfg.K);
    data::ClientBatches bound;
    for (const auto& b : batches) {
      bound.push_back(task.model->bind(b));
      task.train_rows.insert(task.train_rows.end(), b.indices.begin(), b.indices.end());
    }
    task.clients.push_back(std::move(bound));
  }
  std::sort(task.train_rows.begin(), task.train_rows.end());
  task.w0 = task.model->initial_parameters(cfg.seed);
  return task;
}

double mean_local_steps(const Task& task, const AppConfig& cfg) {
  double k = 0.0;
  for (const auto& c : task.clients) k += static_cast<double>(c.size());
  return static_cast<double>(cfg.a) * k / static_cast<double>(task.clients.size());
}

RoundMetrics measure(const Task& task, const AppConfig& cfg, const fed::RoundResult& result,
                     bool full) {
  const auto& w = result.state.w;
  RoundMetrics r;
  r.round = result.state.round;
  r.train_loss = bea::global_loss(task.clients, w);
  if (task.model) {
    r.eval_metric = [&] {
      std::size_t hits = 0;
      const auto& ds = *task.dataset;
      RowMatrix x(1, ds.num_features());
      for (std::size_t begin = 0; begin < task.train_rows.size(); begin += 4096) {
        const std::size_t end = std::min(task.train_rows.size(), begin + 4096);
        x.resize(static_cast<Eigen::Index>(end - begin), ds.num_features());
        for (std::size_t i = begin; i < end; ++i)
          x.row(static_cast<Eigen::Index>(i - begin)) =
              ds.features.row(static_cast<Eigen::Index>(task.train_rows[i]));
        const RowMatrix logits = task.model->logits(x, w);
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
          Eigen::Index arg = 0;
          logits.row(i).maxCoeff(&arg);
          if (arg == ds.labels[task.train_rows[begin + static_cast<std::size_t>(i)]]) ++hits;
        }
      }
      return static_cast<double>(hits) / static_cast<double>(task.train_rows.size());
    }();
  } else {
    r.eval_metric = bea::global_grad(task.clients, w).norm();
  }
  r.epsilon_mean = result.epsilon_mean;
  if (!full) return r;
  const double e = mean_local_steps(task, cfg);
  r.client_grad_var = analysis::client_gradient_variance(task.clients, w);
  r.batch_grad_var = analysis::batch_gradient_variance(task.clients, w);
  r.dispersion = e * cfg.eta / 4.0 * *r.client_grad_var;
  r.secondary_dispersion = bea::secondary_dispersion_term(task.clients, w);
  if (task.model)
    r.fisher_trace =
        analysis::fisher_trace_estimate(*task.model, *task.dataset, w, task.train_rows, cfg.threads);
  const auto all = flatten(task);
  r.max_eig = analysis::max_eigenvalue_power_iteration(all, w, 200, 1e-6, cfg.seed).max_eigenvalue;
  return r;
}

SimulationOutcome run_simulation(const AppConfig& cfg, const fs::path& out_dir,
                                 const RunOptions& opts) {
  prepare_dir(out_dir);
  SimulationOutcome out;
  out.manifest = out_dir / "manifest.json";
  out.metrics = out_dir / "metrics.csv";
  out.summary = out_dir / "summary.json";
  write_text(out.manifest,
             manifest(cfg, "simulate", opts,
                      {{"metrics", "metrics.csv"}, {"summary", "summary.json"}})
                     .dump(2) +
                 "\n");

  const Task task = build_task(cfg);
  const auto fcfg = federation_config(cfg);
  const auto warnings = fed::validate(fcfg, task.clients);
  fed::RoundResult current;
  current.state = fed::make_state(task.clients, task.w0);

  std::vector<RoundMetrics> rows;
  std::optional<std::uint64_t> threshold_round;
  for (std::size_t i = 1; i <= cfg.rounds; ++i) {
    try {
      current = fed::run_round(current.state, fcfg);
    } catch (const DivergenceError& e) {
      out.error = "round " + std::to_string(i) + ": " + e.what();
      RoundMetrics err;
      err.round = i;
      rows.push_back(err);
      break;
    }
    const bool full = i % cfg.metric_cadence == 0 || i == cfg.rounds;
    rows.push_back(measure(task, cfg, current, full));
    ++out.rounds_completed;
    if (cfg.eval_threshold && !threshold_round && rows.back().eval_metric &&
        *rows.back().eval_metric >= *cfg.eval_threshold)
      threshold_round = i;
  }
  emit_metrics_csv(rows, out.metrics);

  json summary = {{"rounds_completed", out.rounds_completed},
                  {"diverged", out.error.has_value()},
                  {"warnings", warnings}};
  summary["error"] = out.error ? json(*out.error) : json(nullptr);
  summary["final_train_loss"] =
      out.rounds_completed > 0 && rows[out.rounds_completed - 1].train_loss
          ? json(*rows[out.rounds_completed - 1].train_loss)
          : json(nullptr);
  summary["eval_threshold"] = cfg.eval_threshold ? json(*cfg.eval_threshold) : json(nullptr);
  summary["threshold_round"] = threshold_round ? json(*threshold_round) : json(nullptr);
  write_text(out.summary, summary.dump(2) + "\n");
  return out;
}

namespace {

struct GapSeries {
  json entries = json::array();
  std::vector<std::pair<double, double>> points;
};

json fit_status(const GapSeries& s) {
  json j = {{"gaps", s.entries}, {"tolerance", kExactTolerance}, {"window", {kOrderLow, kOrderHigh}}};
  bool all_exact = true;
  for (const auto& [eta, gap] : s.points) all_exact = all_exact && gap <= kExactTolerance;
  if (all_exact) {
    j["exponent"] = nullptr;
    j["status"] = "exact";
    return j;
  }
  try {
    const auto fit = bea::residual_order_fit(s.points);
    j["exponent"] = fit.exponent ? json(*fit.exponent) : json(nullptr);
    const bool ok = fit.exponent && *fit.exponent >= kOrderLow && *fit.exponent <= kOrderHigh;
    j["status"] = ok ? "pass" : "fail";
  } catch (const DomainError& e) {
    j["exponent"] = nullptr;
    j["status"] = "fail";
    j["detail"] = e.what();
  }
  return j;
}

json prediction_check(const Task& task, const AppConfig& cfg, bea::Variant variant,
                      double* xi_max) {
  GapSeries series;
  json mc = json::array();
  bool mc_ok = true;
  for (double eta : cfg.verify.etas) {
    const ParamVector pred =
        bea::expected_round_update_prediction(task.clients, task.w0, eta, variant);
    bea::OracleOptions opts;
    opts.variant = variant;
    opts.keep_orders = false;
    opts.threads = cfg.threads;
    double gap = 0.0;
    if (cfg.verify.oracle == "exact") {
      const auto rep = bea::brute_force_expected_update(task.clients, task.w0, eta, opts);
      gap = (rep.expected_update - pred).lpNorm<Eigen::Infinity>();
      if (xi_max)
        *xi_max = std::max(*xi_max, rep.xi_mean_discrepancy.lpNorm<Eigen::Infinity>());
      series.entries.push_back({{"eta", eta}, {"gap", gap}});
    } else {
      const auto est = bea::monte_carlo_expected_update(task.clients, task.w0, eta,
                                                        cfg.verify.mc_trials, cfg.seed, opts);
      const ParamVector diff = (est.mean - pred).cwiseAbs();
      gap = diff.maxCoeff();
      double z = 0.0;
      for (Eigen::Index i = 0; i < diff.size(); ++i)
        z = std::max(z, est.stderr_[i] > 0.0 ? diff[i] / est.stderr_[i]
                                             : (diff[i] <= kExactTolerance ? 0.0 : INFINITY));
      mc_ok = mc_ok && z <= 4.0;
      series.entries.push_back(
          {{"eta", eta}, {"gap", gap}, {"stderr_max", est.stderr_.maxCoeff()}, {"z_max", z}});
    }
    series.points.emplace_back(eta, gap);
  }
  if (cfg.verify.oracle == "exact") return fit_status(series);
  return {{"gaps", series.entries},
          {"oracle", "monte_carlo"},
          {"trials", cfg.verify.mc_trials},
          {"status", mc_ok ? "pass" : "fail"}};
}

double max_term_difference(const bea::ModifiedLossReport& x, const bea::ModifiedLossReport& y) {
  const double terms[][2] = {
      {x.base_loss, y.base_loss},
      {x.coefficients.dispersion * x.dispersion, y.coefficients.dispersion * y.dispersion},
      {x.coefficients.sgd * x.sgd_term, y.coefficients.sgd * y.sgd_term},
      {x.coefficients.sam_penalty * x.sam_penalty, y.coefficients.sam_penalty * y.sam_penalty},
      {x.coefficients.scaffold_batch * x.scaffold_batch_term,
       y.coefficients.scaffold_batch * y.scaffold_batch_term},
      {x.value(), y.value()}};
  double m = 0.0;
  for (const auto& t : terms) m = std::max(m, std::abs(t[0] - t[1]));
  return m;
}

json identity(const std::string& name, double value, double tolerance) {
  return {{"name", name},
          {"value", value},
          {"tolerance", tolerance},
          {"status", std::abs(value) <= tolerance ? "pass" : "fail"}};
}

}  // namespace

json verification_report(const AppConfig& cfg) {
  if (cfg.task.kind != TaskKind::kQuadratic)
    throw ConfigError("verify requires a quadratic task (task.kind = \"quadratic\")");
  if (cfg.a != 1)
    throw ConfigError("verify enumerates a single local epoch; set a = 1 and use K for E");
  const Task task = build_task(cfg);
  const std::size_t e = cfg.K.value_or(1);
  if (cfg.verify.oracle == "exact" && e > bea::kMaxEnumeratedSteps)
    throw CapabilityError("exact enumeration supports E <= " +
                          std::to_string(bea::kMaxEnumeratedSteps) + " (got E = " +
                          std::to_string(e) +
                          "); set verify.oracle to \"monte_carlo\" to estimate the expectation");

  json report;
  report["artifact"] = "fedbea";
  report["version"] = kVersion;
  report["config"] = to_json(cfg);
  report["E"] = e;

  double xi_max = 0.0;
  json checks;
  checks["fedavg_prediction"] = prediction_check(task, cfg, bea::Variant::kFedAvg, &xi_max);
  checks["no_dispersion_prediction"] =
      prediction_check(task, cfg, bea::Variant::kFedAvgNoDispersion, nullptr);
  checks["scaffold_prediction"] = prediction_check(task, cfg, bea::Variant::kScaffold, nullptr);
  if (cfg.verify.oracle == "exact")
    checks["xi_zero_mean"] = identity("xi_zero_mean", xi_max, kExactTolerance);

  const double de = static_cast<double>(e);
  const auto& w = task.w0;
  const auto fedavg = bea::modified_loss_fedavg(task.clients, w, cfg.eta, de);
  const auto sam0 = bea::modified_loss_fedsam(task.clients, w, cfg.eta, de, 0.0);
  const auto sam_half = bea::modified_loss_fedsam(task.clients, w, cfg.eta, de, de * cfg.eta / 2.0);
  const auto scaffold = bea::modified_loss_scaffold(task.clients, w, cfg.eta, de);
  const auto second = bea::modified_loss_fedavg_second_order(task.clients, w, cfg.a, de, cfg.eta);
  const std::vector<data::ClientBatches> group(task.clients.begin(), task.clients.end());
  const std::vector<std::vector<data::ClientBatches>> groups{group};
  const auto partial = bea::modified_loss_fedavg_partial(groups, w, cfg.eta, de);

  json ids = json::array();
  ids.push_back(identity("fedsam_eps0_matches_fedavg", max_term_difference(sam0, fedavg),
                         kExactTolerance));
  ids.push_back(identity("fedsam_half_step_dispersion_coefficient",
                         sam_half.coefficients.dispersion, 0.0));
  ids.push_back(identity("partial_single_group_matches_fedavg",
                         max_term_difference(partial, fedavg), kExactTolerance));
  ids.push_back(identity("transformed_dispersion_at_zero_eta",
                         bea::transformed_dispersion_term(task.clients, w, cfg.a, 0.0) -
                             bea::dispersion_term(task.clients, w),
                         0.0));
  const double sec = bea::secondary_dispersion_term(task.clients, w);
  ids.push_back({{"name", "secondary_dispersion_nonnegative"},
                 {"value", sec},
                 {"status", sec >= 0.0 ? "pass" : "fail"}});
  checks["identities"] = ids;
  report["checks"] = checks;
  report["reports"] = {{"fedavg", bea::to_json(fedavg)},
                       {"fedsam", bea::to_json(sam_half)},
                       {"scaffold", bea::to_json(scaffold)},
                       {"fedavg_second_order", bea::to_json(second)}};

  bool all_ok = true;
  auto visit = [&](const json& j) {
    if (j.contains("status")) all_ok = all_ok && j["status"] != "fail";
  };
  for (auto it = checks.begin(); it != checks.end(); ++it) {
    if (it->is_array())
      for (const auto& x : *it) visit(x);
    else
      visit(*it);
  }
  report["status"] = all_ok ? "pass" : "fail";
  return report;
}

fs::path run_verification(const AppConfig& cfg, const fs::path& out_dir, const RunOptions& opts) {
  prepare_dir(out_dir);
  write_text(out_dir / "manifest.json",
             manifest(cfg, "verify", opts, {{"report", "report.json"}}).dump(2) + "\n");
  const json report = verification_report(cfg);
  const fs::path path = out_dir / "report.json";
  write_text(path, report.dump(2) + "\n");
  return path;
}

json partition_report(const Dataset& ds, const data::PartitionSpec& spec) {
  const auto shards = data::dirichlet_partition(ds, spec);
  json clients = json::array();
  for (const auto& s : shards) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(ds.num_classes), 0);
    for (std::size_t i : s.indices) ++counts[static_cast<std::size_t>(ds.labels[i])];
    clients.push_back({{"client_id", s.client_id},
                       {"size", s.indices.size()},
                       {"class_counts", counts},
                       {"indices", s.indices}});
  }
  return {{"num_examples", ds.size()},
          {"num_classes", ds.num_classes},
          {"num_clients", spec.num_clients},
          {"alpha", spec.alpha},
          {"seed", spec.seed},
          {"clients", clients}};
}

}  // namespace fedbea::app
