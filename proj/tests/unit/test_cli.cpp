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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fedbea/app/config.hpp"
#include "fedbea/app/metrics.hpp"
#include "fedbea/app/runner.hpp"
#include "fedbea/errors.hpp"

namespace fedbea {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

app::RunOptions fixed_clock() {
  return {[] { return std::string("2000-01-01T00:00:00Z"); }};
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("fedbea_cli_" + std::to_string(::getpid()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  fs::path path(const std::string& name) const { return root_ / name; }
  fs::path write(const std::string& name, const std::string& body) const {
    std::ofstream(root_ / name, std::ios::binary) << body;
    return root_ / name;
  }

 private:
  fs::path root_;
};

json quadratic_config() {
  return {{"algorithm", "fedavg"},
          {"task", {{"kind", "quadratic"}, {"dimension", 4}}},
          {"m", 3},
          {"K", 2},
          {"eta", 0.01},
          {"rounds", 6},
          {"heterogeneity", 2.0},
          {"seed", 11}};
}

std::string config_error(const json& doc) {
  try {
    app::parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, AcceptsProtocolValues) {
  const json doc = {{"algorithm", "fedavg"},
                    {"task", {{"kind", "blobs"}, {"classes", 10}, {"features", 10}}},
                    {"m", 10},
                    {"eta", 0.001},
                    {"a", 3},
                    {"batch_size", 300},
                    {"alpha", 0.05}};
  const auto cfg = app::parse_config(doc);
  EXPECT_EQ(cfg.a, 3u);
  EXPECT_EQ(cfg.batch_size, 300u);
  EXPECT_DOUBLE_EQ(cfg.alpha, 0.05);
  EXPECT_EQ(cfg.task.kind, app::TaskKind::kBlobs);
}

TEST(Config, RejectsNegativeStepSize) {
  json doc = quadratic_config();
  doc["eta"] = -0.1;
  EXPECT_NE(config_error(doc).find("eta"), std::string::npos);
}

TEST(Config, RejectsUnknownKeyByName) {
  json doc = quadratic_config();
  doc["momentum"] = 0.9;
  EXPECT_NE(config_error(doc).find("momentum"), std::string::npos);
}

TEST(Config, ListsEveryViolation) {
  json doc = quadratic_config();
  doc["momentum"] = 0.9;
  doc["eta"] = 0.0;
  doc["m"] = 0;
  doc["algorithm"] = "fedprox";
  const std::string msg = config_error(doc);
  for (const char* key : {"momentum", "eta must", "m must", "algorithm must"})
    EXPECT_NE(msg.find(key), std::string::npos) << key << " missing from: " << msg;
  EXPECT_NE(msg.find("4 configuration errors"), std::string::npos) << msg;
}

TEST(Config, RoundTripsThroughJson) {
  json doc = quadratic_config();
  doc["algorithm"] = "fedsam";
  doc["eps_policy"] = {{"mode", "switch"}, {"r_star", 4}, {"numerator", 0.02}};
  const auto cfg = app::parse_config(doc);
  EXPECT_EQ(app::to_json(app::parse_config(app::to_json(cfg))), app::to_json(cfg));
  EXPECT_EQ(cfg.eps_policy.switch_round, 4u);
}

TEST_F(TempDir, LoadConfigErrors) {
  EXPECT_THROW(app::load_config(path("missing.json")), IoError);
  EXPECT_THROW(app::load_config(write("bad.json", "{ not json")), ConfigError);
  EXPECT_EQ(app::load_config(write("ok.json", quadratic_config().dump())).m, 3u);
}

TEST(MetricsCsv, HeaderAndRows) {
  const std::string empty = app::format_metrics_csv({});
  EXPECT_EQ(empty,
            "round,train_loss,eval_metric,client_grad_var,batch_grad_var,dispersion,"
            "secondary_dispersion,fisher_trace,max_eig,epsilon_mean\r\n");
  app::RoundMetrics r;
  r.round = 1;
  r.train_loss = 0.5;
  const std::string one = app::format_metrics_csv({r});
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);
  EXPECT_NE(one.find("\r\n1,0.5,,,,,,,,\r\n"), std::string::npos);
}

TEST(MetricsCsv, ParseBackIsExact) {
  std::vector<app::RoundMetrics> rows;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    app::RoundMetrics r;
    r.round = i;
    r.train_loss = 1.0 / 3.0 * static_cast<double>(i);
    if (i % 2) r.client_grad_var = 1e-300 * static_cast<double>(i);
    r.max_eig = 4.9e-324;
    r.epsilon_mean = -0.1;
    rows.push_back(r);
  }
  const auto back = app::parse_metrics_csv(app::format_metrics_csv(rows));
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].round, rows[i].round);
    EXPECT_EQ(back[i].train_loss, rows[i].train_loss);
    EXPECT_EQ(back[i].client_grad_var, rows[i].client_grad_var);
    EXPECT_EQ(back[i].max_eig, rows[i].max_eig);
    EXPECT_EQ(back[i].epsilon_mean, rows[i].epsilon_mean);
    EXPECT_FALSE(back[i].fisher_trace.has_value());
  }
}

TEST(MetricsCsv, MalformedInput) {
  const std::string header = app::format_metrics_csv({});
  try {
    app::parse_metrics_csv(header + "1,2,3\r\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(app::parse_metrics_csv("round,loss\r\n"), ParseError);
  EXPECT_THROW(app::parse_metrics_csv(header + "x,,,,,,,,,\r\n"), ParseError);
}

TEST_F(TempDir, EmitReportsPath) {
  try {
    app::emit_metrics_csv({}, path("no/such/dir/metrics.csv"));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("metrics.csv"), std::string::npos);
  }
}

TEST_F(TempDir, ZeroRoundsWritesHeaderOnly) {
  json doc = quadratic_config();
  doc["rounds"] = 0;
  const auto out = app::run_simulation(app::parse_config(doc), path("run"), fixed_clock());
  EXPECT_EQ(read_file(out.metrics), app::format_metrics_csv({}));
  EXPECT_EQ(out.rounds_completed, 0u);
}

TEST_F(TempDir, SimulationIsByteDeterministic) {
  for (const char* algorithm : {"fedavg", "fedsam", "scaffold", "fedavg-no-dispersion"}) {
    json doc = quadratic_config();
    doc["algorithm"] = algorithm;
    const auto cfg = app::parse_config(doc);
    const auto a = app::run_simulation(cfg, path(std::string("a_") + algorithm), fixed_clock());
    const auto b = app::run_simulation(cfg, path(std::string("b_") + algorithm), fixed_clock());
    EXPECT_EQ(read_file(a.metrics), read_file(b.metrics)) << algorithm;
    EXPECT_EQ(read_file(a.summary), read_file(b.summary)) << algorithm;
    EXPECT_EQ(read_file(a.manifest), read_file(b.manifest)) << algorithm;
  }
}

TEST_F(TempDir, ClassifierSimulationIsByteDeterministic) {
  const json doc = {{"algorithm", "fedavg"},
                    {"task",
                     {{"kind", "blobs"},
                      {"classes", 3},
                      {"features", 3},
                      {"examples", 600},
                      {"model", "smooth-mlp"},
                      {"hidden", 4}}},
                    {"m", 4},
                    {"alpha", 0.3},
                    {"batch_size", 10},
                    {"K", 5},
                    {"eta", 0.05},
                    {"rounds", 4},
                    {"metric_cadence", 2},
                    {"threads", 2},
                    {"seed", 3}};
  const auto cfg = app::parse_config(doc);
  const auto a = app::run_simulation(cfg, path("a"), fixed_clock());
  const auto b = app::run_simulation(cfg, path("b"), fixed_clock());
  EXPECT_EQ(read_file(a.metrics), read_file(b.metrics));
  const auto rows = app::parse_metrics_csv(read_file(a.metrics));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].client_grad_var.has_value());
  EXPECT_TRUE(rows[1].client_grad_var.has_value());
  EXPECT_TRUE(rows[3].max_eig.has_value());
}

TEST_F(TempDir, SwitchedRadiusAppearsAtSwitchRound) {
  json doc = quadratic_config();
  doc["algorithm"] = "fedsam";
  doc["K"] = 3;
  doc["rounds"] = 8;
  doc["eps_policy"] = {{"mode", "switch"}, {"r_star", 5}, {"numerator", 1e-3}};
  const auto out = app::run_simulation(app::parse_config(doc), path("run"), fixed_clock());
  const auto rows = app::parse_metrics_csv(read_file(out.metrics));
  ASSERT_EQ(rows.size(), 8u);
  const double half = 3 * 0.01 / 2.0;
  for (const auto& r : rows) {
    ASSERT_TRUE(r.epsilon_mean.has_value());
    if (r.round >= 5)
      EXPECT_DOUBLE_EQ(*r.epsilon_mean, half) << r.round;
    else
      EXPECT_LT(*r.epsilon_mean, half) << r.round;
  }
}

TEST_F(TempDir, DivergenceFlushesRowsAndErrorRow) {
  json doc = quadratic_config();
  doc["eta"] = 10.0;
  doc["rounds"] = 500;
  const auto out = app::run_simulation(app::parse_config(doc), path("run"), fixed_clock());
  ASSERT_TRUE(out.error.has_value());
  const auto rows = app::parse_metrics_csv(read_file(out.metrics));
  ASSERT_EQ(rows.size(), out.rounds_completed + 1);
  ASSERT_GT(out.rounds_completed, 0u);
  const auto& last = rows.back();
  EXPECT_EQ(last.round, out.rounds_completed + 1);
  EXPECT_FALSE(last.train_loss.has_value());
  const auto summary = json::parse(read_file(out.summary));
  EXPECT_TRUE(summary["diverged"].get<bool>());
  EXPECT_FALSE(summary["warnings"].empty());
}

TEST_F(TempDir, VerifyReportSchemaAndStatus) {
  json doc = quadratic_config();
  doc["m"] = 4;
  doc["task"]["dimension"] = 8;
  doc["K"] = 2;
  auto cfg = app::parse_config(doc);
  const auto report = app::verification_report(cfg);
  for (const char* key : {"artifact", "version", "config", "E", "checks", "reports", "status"})
    EXPECT_TRUE(report.contains(key)) << key;
  for (const char* key : {"fedavg_prediction", "no_dispersion_prediction", "scaffold_prediction",
                          "xi_zero_mean", "identities"})
    EXPECT_TRUE(report["checks"].contains(key)) << key;
  for (const char* key : {"fedavg", "fedsam", "scaffold", "fedavg_second_order"})
    EXPECT_TRUE(report["reports"].contains(key)) << key;
  EXPECT_EQ(report["checks"]["fedavg_prediction"]["status"], "exact");
  EXPECT_EQ(report["reports"]["fedsam"]["coefficients"]["dispersion"], 0.0);
  EXPECT_EQ(report["status"], "pass");

  doc["K"] = 3;
  const auto third = app::verification_report(app::parse_config(doc));
  EXPECT_EQ(third["checks"]["fedavg_prediction"]["status"], "pass");
  const double slope = third["checks"]["fedavg_prediction"]["exponent"];
  EXPECT_GE(slope, 2.9);
  EXPECT_LE(slope, 3.1);

  const auto p = app::run_verification(cfg, path("a"), fixed_clock());
  const auto q = app::run_verification(cfg, path("b"), fixed_clock());
  EXPECT_EQ(read_file(p), read_file(q));
}

TEST(Verify, Preconditions) {
  json doc = quadratic_config();
  doc["K"] = 7;
  EXPECT_THROW(app::verification_report(app::parse_config(doc)), CapabilityError);
  doc["K"] = 2;
  doc["a"] = 2;
  EXPECT_THROW(app::verification_report(app::parse_config(doc)), ConfigError);
  doc["a"] = 1;
  doc["task"] = {{"kind", "blobs"}};
  EXPECT_THROW(app::verification_report(app::parse_config(doc)), ConfigError);
}

TEST(Partition, ReportFields) {
  Dataset ds;
  ds.num_classes = 2;
  ds.features = RowMatrix::Zero(10, 1);
  for (int i = 0; i < 10; ++i) ds.labels.push_back(i % 2);
  const auto j = app::partition_report(ds, {3, 1.0, 4});
  EXPECT_EQ(j["num_examples"], 10u);
  EXPECT_EQ(j["clients"].size(), 3u);
  std::size_t total = 0;
  for (const auto& c : j["clients"]) {
    total += c["size"].get<std::size_t>();
    EXPECT_EQ(c["indices"].size(), c["size"].get<std::size_t>());
    EXPECT_EQ(c["class_counts"].size(), 2u);
  }
  EXPECT_EQ(total, 10u);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FEDBEA_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(TempDir, BinaryExitCodes) {
  const auto good = write("good.json", quadratic_config().dump());
  json bad = quadratic_config();
  bad["momentum"] = 0.9;
  const auto bad_path = write("bad.json", bad.dump());
  json diverge = quadratic_config();
  diverge["eta"] = 10.0;
  diverge["rounds"] = 500;
  const auto div_path = write("div.json", diverge.dump());
  const auto csv = write("data.csv", "0,1\n1,2\n0,3\n1,4\n");

  EXPECT_EQ(run_cli("simulate --config " + good.string() + " --out " + path("s").string()), 0);
  EXPECT_TRUE(fs::exists(path("s") / "metrics.csv"));
  EXPECT_EQ(run_cli("simulate --config " + bad_path.string() + " --out " + path("x").string()), 2);
  EXPECT_EQ(run_cli("simulate --config " + div_path.string() + " --out " + path("d").string()), 3);
  EXPECT_EQ(run_cli("verify --config " + good.string() + " --out " + path("v").string()), 0);
  EXPECT_EQ(run_cli("partition --data " + csv.string() + " --clients 2 --alpha 1 --out " +
                    path("p.json").string()),
            0);
  EXPECT_TRUE(fs::exists(path("p.json")));
  EXPECT_EQ(run_cli("simulate --config " + path("nope.json").string()), 1);
  EXPECT_EQ(run_cli("frobnicate"), 2);
}

}  // namespace
}  // namespace fedbea
