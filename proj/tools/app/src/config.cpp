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

#include "fedbea/app/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fedbea/errors.hpp"

namespace fedbea::app {

using nlohmann::json;

namespace {

// Walks one JSON object, recording every violation instead of stopping at
// the first.
class Reader {
 public:
  Reader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {}

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  template <typename T>
  void number(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = obj_.at(key);
    if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(key, "must be a number");
      out = v.get<T>();
    } else {
      if (!v.is_number_integer() && !v.is_number_unsigned())
        return fail(key, "must be an integer");
      if (v.is_number_integer() && v.get<std::int64_t>() < 0)
        return fail(key, "must be non-negative");
      out = static_cast<T>(v.get<std::uint64_t>());
    }
  }

  template <typename T>
  void optional_number(const std::string& key, std::optional<T>& out) {
    if (!has(key)) return;
    T value{};
    number(key, value);
    out = value;
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    if (!obj_.at(key).is_boolean()) return fail(key, "must be true or false");
    out = obj_.at(key).get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    if (!obj_.at(key).is_string()) return fail(key, "must be a string");
    out = obj_.at(key).get<std::string>();
  }

  const json* object(const std::string& key) {
    if (!has(key)) return nullptr;
    if (!obj_.at(key).is_object()) {
      fail(key, "must be an object");
      return nullptr;
    }
    return &obj_.at(key);
  }

  void fail(const std::string& key, const std::string& what) {
    errors_.push_back(path(key) + " " + what);
  }

  void check(bool ok, const std::string& key, const std::string& what) {
    if (!ok) fail(key, what);
  }

  // Unknown keys; call after every known key has been visited.
  void finish(const std::set<std::string>& also_allowed = {}) {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key()) && !also_allowed.count(it.key()))
        errors_.push_back("unknown key '" + path(it.key()) + "'");
  }

  std::string path(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

models::ObjectiveKind parse_model(const std::string& s, Reader& r) {
  if (s == "softmax-linear") return models::ObjectiveKind::kSoftmaxLinear;
  if (s == "smooth-mlp") return models::ObjectiveKind::kSmoothMlp;
  r.fail("model", "must be 'softmax-linear' or 'smooth-mlp'");
  return models::ObjectiveKind::kSoftmaxLinear;
}

void parse_task(const json& obj, TaskConfig& t, std::vector<std::string>& errors) {
  Reader r(obj, "task", errors);
  std::string kind = "quadratic";
  r.string("kind", kind);
  if (kind == "quadratic") {
    t.kind = TaskKind::kQuadratic;
    r.number("dimension", t.dimension);
    r.number("within_spread", t.within_spread);
    r.boolean("shared_curvature", t.shared_curvature);
    r.number("min_eigenvalue", t.min_eigenvalue);
    r.number("max_eigenvalue", t.max_eigenvalue);
    r.check(t.dimension >= 1, "dimension", "must be >= 1");
    r.check(t.within_spread >= 0.0, "within_spread", "must be >= 0");
    r.check(t.min_eigenvalue >= 0.0 && t.min_eigenvalue <= t.max_eigenvalue, "min_eigenvalue",
            "must satisfy 0 <= min_eigenvalue <= max_eigenvalue");
  } else if (kind == "blobs" || kind == "csv") {
    if (kind == "blobs") {
      t.kind = TaskKind::kBlobs;
      r.number("classes", t.classes);
      r.number("features", t.features);
      r.number("examples", t.examples);
      r.number("separation", t.separation);
      r.number("noise", t.noise);
      r.check(t.classes >= 2, "classes", "must be >= 2");
      r.check(t.features >= 1, "features", "must be >= 1");
      r.check(t.examples >= 1, "examples", "must be >= 1");
      r.check(t.separation > 0.0, "separation", "must be > 0");
      r.check(t.noise > 0.0, "noise", "must be > 0");
    } else {
      t.kind = TaskKind::kCsv;
      r.string("path", t.path);
      r.check(!t.path.empty(), "path", "is required for csv tasks");
    }
    std::string model = "softmax-linear";
    r.string("model", model);
    t.model = parse_model(model, r);
    r.number("hidden", t.hidden);
    r.check(t.hidden >= 1, "hidden", "must be >= 1");
  } else {
    r.fail("kind", "must be one of quadratic, blobs, csv");
  }
  r.finish();
}

void parse_eps(const json& obj, fed::EpsilonPolicy& p, std::vector<std::string>& errors) {
  Reader r(obj, "eps_policy", errors);
  std::string mode = std::string(to_string(p.mode));
  r.string("mode", mode);
  try {
    p.mode = fed::parse_epsilon_mode(mode);
  } catch (const ConfigError&) {
    r.fail("mode", "must be one of fixed, inv_sqrt_grad_norm, switch");
  }
  r.number("r_star", p.switch_round);
  r.optional_number("eps_max", p.eps_max);
  r.number("value", p.value);
  r.number("numerator", p.numerator);
  r.optional_number("switch_value", p.switch_value);
  r.check(!p.eps_max || *p.eps_max >= 0.0, "eps_max", "must be >= 0");
  r.check(p.value >= 0.0, "value", "must be >= 0");
  r.check(p.numerator >= 0.0, "numerator", "must be >= 0");
  r.check(!p.switch_value || *p.switch_value >= 0.0, "switch_value", "must be >= 0");
  r.finish();
}

void parse_verify(const json& obj, VerifyConfig& v, std::vector<std::string>& errors) {
  Reader r(obj, "verify", errors);
  if (r.has("etas")) {
    const json& e = obj.at("etas");
    if (!e.is_array() || e.empty()) {
      r.fail("etas", "must be a non-empty array of numbers");
    } else {
      v.etas.clear();
      for (const auto& x : e) {
        if (!x.is_number() || !(x.get<double>() > 0.0)) {
          r.fail("etas", "entries must be positive numbers");
          break;
        }
        v.etas.push_back(x.get<double>());
      }
    }
  }
  r.string("oracle", v.oracle);
  r.check(v.oracle == "exact" || v.oracle == "monte_carlo", "oracle",
          "must be 'exact' or 'monte_carlo'");
  r.number("mc_trials", v.mc_trials);
  r.check(v.mc_trials >= 100, "mc_trials", "must be >= 100");
  r.finish();
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kQuadratic:
      return "quadratic";
    case TaskKind::kBlobs:
      return "blobs";
    case TaskKind::kCsv:
      return "csv";
  }
  return "unknown";
}

AppConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  std::vector<std::string> errors;
  AppConfig cfg;
  Reader r(doc, "", errors);

  std::string algorithm = std::string(fed::to_string(cfg.algorithm));
  r.string("algorithm", algorithm);
  try {
    cfg.algorithm = fed::parse_algorithm(algorithm);
  } catch (const ConfigError&) {
    r.fail("algorithm",
           "must be one of fedavg, fedavg-no-dispersion, fedsam, scaffold, central-sgd");
  }
  if (const json* t = r.object("task")) parse_task(*t, cfg.task, errors);
  r.number("m", cfg.m);
  r.number("a", cfg.a);
  r.optional_number("K", cfg.K);
  r.number("eta", cfg.eta);
  r.number("rounds", cfg.rounds);
  r.number("batch_size", cfg.batch_size);
  r.number("participation", cfg.participation);
  r.number("alpha", cfg.alpha);
  r.number("heterogeneity", cfg.heterogeneity);
  r.number("seed", cfg.seed);
  if (const json* e = r.object("eps_policy")) parse_eps(*e, cfg.eps_policy, errors);
  r.number("metric_cadence", cfg.metric_cadence);
  r.optional_number("eval_threshold", cfg.eval_threshold);
  r.number("threads", cfg.threads);
  if (const json* v = r.object("verify")) parse_verify(*v, cfg.verify, errors);

  r.check(cfg.m >= 1, "m", "must be >= 1");
  r.check(cfg.a >= 1, "a", "must be >= 1");
  r.check(!cfg.K || *cfg.K >= 1, "K", "must be >= 1");
  r.check(cfg.eta > 0.0 && std::isfinite(cfg.eta), "eta", "must be > 0");
  r.check(cfg.batch_size >= 1, "batch_size", "must be >= 1");
  r.check(cfg.participation > 0.0 && cfg.participation <= 1.0, "participation",
          "must be in (0, 1]");
  r.check(cfg.alpha > 0.0, "alpha", "must be > 0");
  r.check(cfg.heterogeneity >= 0.0, "heterogeneity", "must be >= 0");
  r.check(cfg.metric_cadence >= 1, "metric_cadence", "must be >= 1");
  r.check(cfg.threads >= 1, "threads", "must be >= 1");
  r.finish();

  if (!errors.empty()) {
    std::ostringstream os;
    os << errors.size() << " configuration error" << (errors.size() > 1 ? "s" : "") << ": ";
    for (std::size_t i = 0; i < errors.size(); ++i) os << (i ? "; " : "") << errors[i];
    throw ConfigError(os.str());
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const AppConfig& c) {
  json task = {{"kind", to_string(c.task.kind)}};
  switch (c.task.kind) {
    case TaskKind::kQuadratic:
      task["dimension"] = c.task.dimension;
      task["within_spread"] = c.task.within_spread;
      task["shared_curvature"] = c.task.shared_curvature;
      task["min_eigenvalue"] = c.task.min_eigenvalue;
      task["max_eigenvalue"] = c.task.max_eigenvalue;
      break;
    case TaskKind::kBlobs:
      task["classes"] = c.task.classes;
      task["features"] = c.task.features;
      task["examples"] = c.task.examples;
      task["separation"] = c.task.separation;
      task["noise"] = c.task.noise;
      [[fallthrough]];
    case TaskKind::kCsv:
      if (c.task.kind == TaskKind::kCsv) task["path"] = c.task.path;
      task["model"] = models::to_string(c.task.model);
      task["hidden"] = c.task.hidden;
      break;
  }
  json eps = {{"mode", to_string(c.eps_policy.mode)},
              {"r_star", c.eps_policy.switch_round},
              {"value", c.eps_policy.value},
              {"numerator", c.eps_policy.numerator}};
  eps["eps_max"] = c.eps_policy.eps_max ? json(*c.eps_policy.eps_max) : json(nullptr);
  eps["switch_value"] =
      c.eps_policy.switch_value ? json(*c.eps_policy.switch_value) : json(nullptr);
  json out = {
      {"algorithm", fed::to_string(c.algorithm)},
      {"task", task},
      {"m", c.m},
      {"a", c.a},
      {"eta", c.eta},
      {"rounds", c.rounds},
      {"batch_size", c.batch_size},
      {"participation", c.participation},
      {"alpha", c.alpha},
      {"heterogeneity", c.heterogeneity},
      {"seed", c.seed},
      {"eps_policy", eps},
      {"metric_cadence", c.metric_cadence},
      {"threads", c.threads},
      {"verify",
       {{"etas", c.verify.etas}, {"oracle", c.verify.oracle}, {"mc_trials", c.verify.mc_trials}}},
  };
  out["K"] = c.K ? json(*c.K) : json(nullptr);
  out["eval_threshold"] = c.eval_threshold ? json(*c.eval_threshold) : json(nullptr);
  return out;
}

fed::FederationConfig federation_config(const AppConfig& c) {
  fed::FederationConfig f;
  f.algorithm = c.algorithm;
  f.local_epochs = c.a;
  f.eta = c.eta;
  f.rounds = c.rounds;
  f.participation = c.participation;
  f.eps_policy = c.eps_policy;
  f.seed = c.seed;
  f.threads = c.threads;
  return f;
}

}  // namespace fedbea::app
