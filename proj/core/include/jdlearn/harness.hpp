// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "jdlearn/estimator.hpp"

namespace jdl::harness {

enum class ScenarioName { low, med, high };

std::string to_string(ScenarioName s);
ScenarioName scenario_from_string(const std::string& name);

/// Three-dimensional Gaussian data model Z = (Y1, Y2, X): zero mean,
/// variances 1/25, pairwise correlations (rho12, rho13, rho23).
struct Scenario {
  ScenarioName name = ScenarioName::low;
  Vector mu = Vector::Zero(3);
  Vector variances = Vector::Constant(3, 1.0 / 25.0);
  std::array<double, 3> correlations{0.0, 0.0, 0.0};

  static Scenario by_name(ScenarioName name);
};

/// Scenario covariance. The high-correlation triple is indefinite as
/// specified; negative eigenvalues are clipped to zero and the adjustment
/// is reported through `clipped`.
struct ScenarioCov {
  Matrix sigma;
  bool clipped = false;
};

ScenarioCov make_scenario_cov(const Scenario& s);

/// P(a Y1 <= b Y2 + c | X = x) under N(0, sigma) with ordering (Y1,Y2,X).
double true_conditional_prob(double a, double b, double c, const Matrix& sigma,
                             double x);

/// Columns: 1{y1<=y2-0.5}, 1{y1<=y2-0.6}, 1{y1<=y2-0.7}, 1 (n x 4).
Matrix test_function_matrix(const Matrix& y);

/// P(Z3 > 0 | (Z1,Z2) = x12) under N(0, sigma); the population classifier.
double bayes_positive_prob(const Matrix& sigma, const Eigen::Ref<const Vector>& x12);

struct ExperimentConfig {
  ScenarioName scenario = ScenarioName::low;
  std::vector<Index> n_train = {100, 500};
  Index n_val = -1;  // -1: use n_train
  Index n_test = 1000;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> sigma_grid = {0.02, 0.05, 0.1, 0.2, 0.5};
  std::vector<double> eps_grid = {1e-1, 1e-2, 1e-3};
  std::vector<double> lambda_grid = {1e-6, 1e-4, 1e-2};
  std::vector<std::string> variants = {"constrained", "normalized", "unconstrained",
                                       "traditional"};
  std::string output_path;
  double fit_timeout_seconds = 600.0;
  Index traditional_cap = 4000;
  Index klr_cap = 2000;
  int workers = 1;
};

struct ResultRow {
  std::string scenario;
  std::string variant;
  Index n_train = 0;
  std::uint64_t seed = 0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double eps = 0.0;
  double lambda = 0.0;
  Index m_x = 0;
  Index m_y = 0;
  double val_loss = 0.0;
  double oracle_loss = 0.0;
  double posfrac = 0.0;
  double normdev = 0.0;
  double fit_seconds = 0.0;
};

/// The exact CSV column line.
std::string csv_header();
std::string csv_line(const ResultRow& row);
void emit_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> parse_csv(const std::string& path);

/// Disjoint train/validation/test draws (rows of Z) from per-purpose
/// RNG substreams of `seed`.
struct DataSplit {
  Matrix train;
  Matrix val;
  Matrix test;
};

DataSplit draw_split(const Scenario& s, Index n_train, Index n_val, Index n_test,
                     numerics::RngSeed seed);

using FittedModel = std::variant<JointDensityModel, TraditionalModel, KlrModel>;

struct SelectedParams {
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double eps = 0.0;
  double lambda = 0.0;
  double val_loss = 0.0;
  Index m_x = 0;
  Index m_y = 0;
};

/// Grid search over the variant's parameter grid (embedding variants:
/// sigma_x x sigma_y x eps with lambda = 0; traditional and klr:
/// sigma_x x lambda), minimizing the validation objective; ties go to the
/// first grid point in order. Grid points that fail to fit are skipped;
/// if every point fails the failures are collected into the thrown error.
std::pair<SelectedParams, FittedModel> validate_and_fit(
    const ExperimentConfig& config, const DataSplit& split,
    const std::string& variant, bool classification_loss = false);

std::vector<ResultRow> run_prediction_experiment(const ExperimentConfig& config);
std::vector<ResultRow> run_classification_experiment(const ExperimentConfig& config);
std::vector<ResultRow> run_timing_experiment(const ExperimentConfig& config);

}  // namespace jdl::harness
