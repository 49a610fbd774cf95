// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "jdlearn/harness.hpp"

namespace {

using jdl::harness::ExperimentConfig;

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_csv_list(s)) out.push_back(std::stod(item));
  return out;
}

std::vector<jdl::Index> parse_indices(const std::string& s) {
  std::vector<jdl::Index> out;
  for (const auto& item : split_csv_list(s)) out.push_back(std::stoll(item));
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_csv_list(s)) out.push_back(std::stoull(item));
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string v) {
      const auto b = v.find_first_not_of(" \t\r");
      const auto e = v.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }
  return kv;
}

struct CliArgs {
  std::string config_path;
  std::string scenario;
  std::string n_train;
  std::string seeds;
  std::string grid_sigma;
  std::string grid_eps;
  std::string grid_lambda;
  std::string variants;
  std::string out;
  jdl::Index n_val = -2;  // -2: unset
  jdl::Index n_test = -2;
  double timeout = -1.0;
  jdl::Index traditional_cap = -2;
  jdl::Index klr_cap = -2;
};

void add_common_flags(CLI::App* cmd, CliArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--scenario", args.scenario, "low, med or high");
  cmd->add_option("--n-train", args.n_train, "training sizes, comma separated");
  cmd->add_option("--seeds", args.seeds, "seeds, comma separated");
  cmd->add_option("--grid-sigma", args.grid_sigma, "bandwidth grid, comma separated");
  cmd->add_option("--grid-eps", args.grid_eps, "trace tolerance grid");
  cmd->add_option("--grid-lambda", args.grid_lambda, "ridge grid (traditional, klr)");
  cmd->add_option("--variants", args.variants, "variants, comma separated");
  cmd->add_option("--out", args.out, "output CSV path");
  cmd->add_option("--n-val", args.n_val, "validation sample size (default: n-train)");
  cmd->add_option("--n-test", args.n_test, "test sample size");
  cmd->add_option("--timeout", args.timeout, "per-fit timeout in seconds");
  cmd->add_option("--traditional-cap", args.traditional_cap,
                  "largest n for the traditional baseline");
  cmd->add_option("--klr-cap", args.klr_cap, "largest n for klr");
}

// config file first, then flags on top
ExperimentConfig build_config(const CliArgs& args, const ExperimentConfig& defaults) {
  ExperimentConfig cfg = defaults;
  if (!args.config_path.empty()) {
    for (const auto& [key, value] : read_config_file(args.config_path)) {
      if (key == "scenario") {
        cfg.scenario = jdl::harness::scenario_from_string(value);
      } else if (key == "n_train") {
        cfg.n_train = parse_indices(value);
      } else if (key == "seeds") {
        cfg.seeds = parse_seeds(value);
      } else if (key == "grid_sigma") {
        cfg.sigma_grid = parse_doubles(value);
      } else if (key == "grid_eps") {
        cfg.eps_grid = parse_doubles(value);
      } else if (key == "grid_lambda") {
        cfg.lambda_grid = parse_doubles(value);
      } else if (key == "variants") {
        cfg.variants = split_csv_list(value);
      } else if (key == "out") {
        cfg.output_path = value;
      } else if (key == "n_val") {
        cfg.n_val = std::stoll(value);
      } else if (key == "n_test") {
        cfg.n_test = std::stoll(value);
      } else if (key == "timeout") {
        cfg.fit_timeout_seconds = std::stod(value);
      } else if (key == "traditional_cap") {
        cfg.traditional_cap = std::stoll(value);
      } else if (key == "klr_cap") {
        cfg.klr_cap = std::stoll(value);
      } else {
        throw std::invalid_argument("unknown config key: " + key);
      }
    }
  }
  if (!args.scenario.empty()) {
    cfg.scenario = jdl::harness::scenario_from_string(args.scenario);
  }
  if (!args.n_train.empty()) cfg.n_train = parse_indices(args.n_train);
  if (!args.seeds.empty()) cfg.seeds = parse_seeds(args.seeds);
  if (!args.grid_sigma.empty()) cfg.sigma_grid = parse_doubles(args.grid_sigma);
  if (!args.grid_eps.empty()) cfg.eps_grid = parse_doubles(args.grid_eps);
  if (!args.grid_lambda.empty()) cfg.lambda_grid = parse_doubles(args.grid_lambda);
  if (!args.variants.empty()) cfg.variants = split_csv_list(args.variants);
  if (!args.out.empty()) cfg.output_path = args.out;
  if (args.n_val != -2) cfg.n_val = args.n_val;
  if (args.n_test != -2) cfg.n_test = args.n_test;
  if (args.timeout >= 0.0) cfg.fit_timeout_seconds = args.timeout;
  if (args.traditional_cap != -2) cfg.traditional_cap = args.traditional_cap;
  if (args.klr_cap != -2) cfg.klr_cap = args.klr_cap;

  cfg.workers = 1;
  if (const char* env = std::getenv("JDLEARN_WORKERS")) {
    cfg.workers = std::max(1, std::atoi(env));
  }
  return cfg;
}

void write_rows(const std::vector<jdl::harness::ResultRow>& rows,
                const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << jdl::harness::csv_header() << '\n';
    for (const auto& r : rows) std::cout << jdl::harness::csv_line(r) << '\n';
    return;
  }
  jdl::harness::emit_csv(rows, path);
  std::fprintf(stderr, "wrote %zu rows to %s\n", rows.size(), path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-rank joint distribution embedding experiments"};
  app.require_subcommand(1);

  CliArgs pred_args, cls_args, timing_args;
  CLI::App* predict = app.add_subcommand(
      "predict", "conditional-probability prediction study (accuracy, positivity, "
                 "normalization)");
  add_common_flags(predict, pred_args);
  CLI::App* classify =
      app.add_subcommand("classify", "sign classification study against klr");
  add_common_flags(classify, cls_args);
  CLI::App* timing =
      app.add_subcommand("timing", "coefficient computation wall-time study");
  add_common_flags(timing, timing_args);

  CLI::App* oracle = app.add_subcommand(
      "oracle", "analytic conditional probability P(a Y1 <= b Y2 + c | X = x)");
  std::string oracle_scenario = "low";
  double oa = 1.0, ob = 1.0, oc = -0.5, ox = 0.0;
  std::uint64_t mc_samples = 0, mc_seed = 0;
  oracle->add_option("--scenario", oracle_scenario, "low, med or high");
  oracle->add_option("--a", oa, "coefficient of Y1");
  oracle->add_option("--b", ob, "coefficient of Y2");
  oracle->add_option("--c", oc, "threshold");
  oracle->add_option("--x", ox, "conditioning value")->required();
  oracle->add_option("--mc-samples", mc_samples,
                     "optional Monte Carlo cross-check sample count");
  oracle->add_option("--mc-seed", mc_seed, "Monte Carlo seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (oracle->parsed()) {
      const auto scen = jdl::harness::Scenario::by_name(
          jdl::harness::scenario_from_string(oracle_scenario));
      const auto cov = jdl::harness::make_scenario_cov(scen);
      if (cov.clipped) {
        std::fprintf(stderr,
                     "note: scenario '%s' covariance clipped to positive "
                     "semidefinite\n",
                     oracle_scenario.c_str());
      }
      const double p = jdl::harness::true_conditional_prob(oa, ob, oc, cov.sigma, ox);
      std::printf("P(%g*Y1 <= %g*Y2 + %g | X = %g) = %.12f\n", oa, ob, oc, ox, p);
      if (mc_samples > 0) {
        // conditional draw: (Y1, Y2) | X = x is Gaussian
        const Eigen::Matrix2d s11 = cov.sigma.topLeftCorner<2, 2>();
        const Eigen::Vector2d s12 = cov.sigma.topRightCorner<2, 1>();
        const double s22 = cov.sigma(2, 2);
        const Eigen::Vector2d mu = s12 * (ox / s22);
        Eigen::Matrix2d sc = s11 - s12 * s12.transpose() / s22;
        jdl::Matrix cond_cov = sc;
        jdl::Vector cond_mu = mu;
        const jdl::Matrix draws = jdl::numerics::sample_mvn(
            cond_mu, cond_cov, static_cast<jdl::Index>(mc_samples),
            jdl::numerics::RngSeed{mc_seed});
        double hits = 0.0;
        for (jdl::Index i = 0; i < draws.rows(); ++i) {
          if (oa * draws(i, 0) <= ob * draws(i, 1) + oc) hits += 1.0;
        }
        std::printf("monte carlo (%llu samples) = %.12f\n",
                    static_cast<unsigned long long>(mc_samples),
                    hits / static_cast<double>(draws.rows()));
      }
      return 0;
    }

    ExperimentConfig defaults;
    std::vector<jdl::harness::ResultRow> rows;
    if (predict->parsed()) {
      const ExperimentConfig cfg = build_config(pred_args, defaults);
      rows = jdl::harness::run_prediction_experiment(cfg);
      write_rows(rows, cfg.output_path);
    } else if (classify->parsed()) {
      defaults.scenario = jdl::harness::ScenarioName::med;
      defaults.variants = {"constrained", "unconstrained", "traditional", "klr"};
      const ExperimentConfig cfg = build_config(cls_args, defaults);
      rows = jdl::harness::run_classification_experiment(cfg);
      write_rows(rows, cfg.output_path);
    } else if (timing->parsed()) {
      defaults.variants = {"constrained", "unconstrained", "traditional"};
      defaults.n_train = {1000, 10000, 100000};
      defaults.seeds = {0};
      defaults.eps_grid = {1e-2, 1e-1, 1e-3};
      const ExperimentConfig cfg = build_config(timing_args, defaults);
      rows = jdl::harness::run_timing_experiment(cfg);
      write_rows(rows, cfg.output_path);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
