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
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fedbea/app/config.hpp"
#include "fedbea/app/runner.hpp"
#include "fedbea/data.hpp"
#include "fedbea/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kDiverged = 3, kFailedChecks = 4, kError = 1 };

std::filesystem::path resolve_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FEDBEA_OUT_DIR")) return env;
  return "fedbea_out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedbea: federated optimization simulator and modified-loss verifier"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* simulate = app.add_subcommand("simulate", "Run a federated training simulation");
  simulate->add_option("--config", config_path, "JSON configuration file")->required();
  simulate->add_option("--out", out_dir, "Output directory (default $FEDBEA_OUT_DIR or ./fedbea_out)");

  auto* verify = app.add_subcommand("verify", "Check modified-loss predictions on a quadratic task");
  verify->add_option("--config", config_path, "JSON configuration file")->required();
  verify->add_option("--out", out_dir, "Output directory (default $FEDBEA_OUT_DIR or ./fedbea_out)");

  std::string data_path, partition_out;
  std::size_t clients = 1;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  auto* partition = app.add_subcommand("partition", "Dirichlet-partition a CSV dataset");
  partition->add_option("--data", data_path, "Headerless label,f1,...,fp CSV")->required();
  partition->add_option("--clients", clients, "Number of clients")->required();
  partition->add_option("--alpha", alpha, "Dirichlet concentration")->required();
  partition->add_option("--seed", seed, "Partition seed")->default_val(0);
  partition->add_option("--out", partition_out, "Output JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) {
      const auto cfg = fedbea::app::load_config(config_path);
      const auto outcome = fedbea::app::run_simulation(cfg, resolve_out(out_dir));
      std::cout << outcome.metrics.string() << "\n";
      if (outcome.error) {
        std::cerr << "fedbea: diverged: " << *outcome.error << "\n";
        return kDiverged;
      }
      return kOk;
    }
    if (*verify) {
      const auto cfg = fedbea::app::load_config(config_path);
      const auto path = fedbea::app::run_verification(cfg, resolve_out(out_dir));
      std::cout << path.string() << "\n";
      std::ifstream in(path);
      const auto report = nlohmann::json::parse(in);
      return report.at("status") == "pass" ? kOk : kFailedChecks;
    }
    if (*partition) {
      const auto ds = fedbea::data::load_csv_dataset(data_path);
      const auto doc = fedbea::app::partition_report(ds, {clients, alpha, seed});
      std::ofstream out(partition_out, std::ios::binary | std::ios::trunc);
      if (!out) throw fedbea::IoError("cannot write '" + partition_out + "'");
      out << doc.dump(2) << "\n";
      std::cout << partition_out << "\n";
      return kOk;
    }
  } catch (const fedbea::ConfigError& e) {
    std::cerr << "fedbea: configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const fedbea::Error& e) {
    std::cerr << "fedbea: " << e.what() << "\n";
    return kError;
  }
  return kOk;
}
