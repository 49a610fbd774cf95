// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace jdl::harness {

namespace {

constexpr double kPosTol = 1e-7;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

bool is_embedding(const std::string& v) {
  return v == "constrained" || v == "normalized" || v == "unconstrained";
}

void check_known_variant(const std::string& v) {
  if (!is_embedding(v) && v != "traditional" && v != "klr") {
    throw std::invalid_argument("unknown variant: " + v);
  }
}

void check_config(const ExperimentConfig& c) {
  if (c.n_train.empty()) throw std::invalid_argument("config: n_train is empty");
  for (Index n : c.n_train) {
    if (n < 2) throw std::invalid_argument("config: n_train entries must be >= 2");
  }
  if (c.n_test < 1) throw std::invalid_argument("config: n_test must be >= 1");
  if (c.seeds.empty()) throw std::invalid_argument("config: seeds is empty");
  if (c.sigma_grid.empty() || c.eps_grid.empty() || c.lambda_grid.empty()) {
    throw std::invalid_argument("config: parameter grids must be non-empty");
  }
  if (c.variants.empty()) throw std::invalid_argument("config: variants is empty");
  for (const auto& v : c.variants) check_known_variant(v);
}

Index resolved_n_val(const ExperimentConfig& c, Index n_train) {
  return c.n_val > 0 ? c.n_val : n_train;
}

void warn_if_clipped(const Scenario& s) {
  static std::once_flag flag;
  const ScenarioCov cov = make_scenario_cov(s);
  if (cov.clipped) {
    std::call_once(flag, [&] {
      std::fprintf(stderr,
                   "note: scenario '%s' has an indefinite correlation matrix; "
                   "negative eigenvalues were clipped to zero\n",
                   to_string(s.name).c_str());
    });
  }
}

// ---------------------------------------------------------------------------
// grid sweeps

struct EmbeddingChoice {
  SelectedParams params;
  std::optional<JointDensityModel> model;
};

using EmbeddingLoss = std::function<double(const JointDensityModel&)>;

std::vector<EmbeddingChoice> sweep_embedding(const ExperimentConfig& config,
                                             const PairedSample& train,
                                             const std::vector<Variant>& variants,
                                             const EmbeddingLoss& loss,
                                             std::vector<std::string>& failures) {
  std::vector<EmbeddingChoice> best(variants.size());
  // selection only needs the argmin grid point; the winner is refit at the
  // default tolerance afterwards
  FitOptions sweep_opts;
  sweep_opts.qp_tol = 1e-6;
  sweep_opts.qp_max_iter = 8000;
  for (double sx : config.sigma_grid) {
    auto kx = std::make_shared<GaussianKernel>(sx);
    for (double sy : config.sigma_grid) {
      auto ky = std::make_shared<GaussianKernel>(sy);
      for (double eps : config.eps_grid) {
        PreparedFit prep;
        try {
          prep = prepare_fit(train, *kx, *ky, eps);
        } catch (const std::exception& e) {
          std::ostringstream os;
          os << "sigma_x=" << sx << " sigma_y=" << sy << " eps=" << eps << ": "
             << e.what();
          failures.push_back(os.str());
          continue;
        }
        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
          try {
            JointDensityModel model =
                fit_variant(prep, train, kx, ky, /*lambda=*/0.0, variants[vi],
                            sweep_opts);
            const double l = loss(model);
            if (!best[vi].model || l < best[vi].params.val_loss) {
              best[vi].params = {sx, sy, eps, 0.0, l, model.m_x(), model.m_y()};
              best[vi].model = std::move(model);
            }
          } catch (const std::exception& e) {
            std::ostringstream os;
            os << to_string(variants[vi]) << " sigma_x=" << sx << " sigma_y=" << sy
               << " eps=" << eps << ": " << e.what();
            failures.push_back(os.str());
          }
        }
      }
    }
  }
  return best;
}

struct TraditionalChoice {
  SelectedParams params;
  std::optional<TraditionalModel> model;
};

using TraditionalLoss = std::function<double(const TraditionalModel&)>;

TraditionalChoice sweep_traditional(const ExperimentConfig& config,
                                    const PairedSample& train,
                                    const TraditionalLoss& loss,
                                    std::vector<std::string>& failures) {
  TraditionalChoice best;
  for (double sx : config.sigma_grid) {
    auto kx = std::make_shared<GaussianKernel>(sx);
    for (double lambda : config.lambda_grid) {
      try {
        TraditionalModel model = traditional_fit(train, kx, lambda);
        const double l = loss(model);
        if (!best.model || l < best.params.val_loss) {
          best.params = {sx, 0.0, 0.0, lambda, l, 0, 0};
          best.model = std::move(model);
        }
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "traditional sigma_x=" << sx << " lambda=" << lambda << ": " << e.what();
        failures.push_back(os.str());
      }
    }
  }
  return best;
}

struct KlrChoice {
  SelectedParams params;
  std::optional<KlrModel> model;
};

using KlrLoss = std::function<double(const KlrModel&)>;

KlrChoice sweep_klr(const ExperimentConfig& config, const Matrix& train_x,
                    const Vector& labels, const KlrLoss& loss,
                    std::vector<std::string>& failures) {
  KlrChoice best;
  for (double sx : config.sigma_grid) {
    auto kx = std::make_shared<GaussianKernel>(sx);
    for (double lambda : config.lambda_grid) {
      try {
        KlrModel model = klr_fit(PointSet{train_x}, labels, kx, lambda);
        const double l = loss(model);
        if (!best.model || l < best.params.val_loss) {
          best.params = {sx, 0.0, 0.0, lambda, l, 0, 0};
          best.model = std::move(model);
        }
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "klr sigma_x=" << sx << " lambda=" << lambda << ": " << e.what();
        failures.push_back(os.str());
      }
    }
  }
  return best;
}

[[noreturn]] void throw_all_failed(const std::string& variant,
                                   const std::vector<std::string>& failures) {
  std::ostringstream os;
  os << "validate_and_fit: every grid point failed for variant '" << variant << "':";
  for (const auto& f : failures) os << "\n  " << f;
  throw std::runtime_error(os.str());
}

double logistic_loss(const Vector& probs_plus, const Vector& labels) {
  double loss = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    double p = labels(i) > 0.0 ? probs_plus(i) : 1.0 - probs_plus(i);
    p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
    loss -= std::log(p);
  }
  return loss;
}

Vector sign_labels(const Eigen::Ref<const Vector>& y) {
  Vector out(y.size());
  for (Index i = 0; i < y.size(); ++i) out(i) = y(i) >= 0.0 ? 1.0 : -1.0;
  return out;
}

// prediction-role views of a Z sample: X = Z3, Y = (Z1, Z2)
PairedSample prediction_sample(const Matrix& z) {
  return PairedSample{z.rightCols(1), z.leftCols(2)};
}

// classification-role views: X = (Z1, Z2), Y = Z3
PairedSample classification_sample(const Matrix& z) {
  return PairedSample{z.leftCols(2), z.rightCols(1)};
}

Matrix truth_matrix(const Matrix& sigma, const Matrix& test_x) {
  const Index t = test_x.rows();
  Matrix truth(t, 4);
  const double thresholds[3] = {-0.5, -0.6, -0.7};
  for (Index i = 0; i < t; ++i) {
    for (int j = 0; j < 3; ++j) {
      truth(i, j) = true_conditional_prob(1.0, 1.0, thresholds[j], sigma, test_x(i, 0));
    }
    truth(i, 3) = 1.0;
  }
  return truth;
}

template <typename Fn>
void parallel_tasks(int workers, Index count, Fn&& fn) {
  if (workers <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nthreads = std::min<Index>(workers, count);
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string to_string(ScenarioName s) {
  switch (s) {
    case ScenarioName::low: return "low";
    case ScenarioName::med: return "med";
    case ScenarioName::high: return "high";
  }
  return "unknown";
}

ScenarioName scenario_from_string(const std::string& name) {
  if (name == "low") return ScenarioName::low;
  if (name == "med") return ScenarioName::med;
  if (name == "high") return ScenarioName::high;
  throw std::invalid_argument("unknown scenario: " + name);
}

Scenario Scenario::by_name(ScenarioName name) {
  Scenario s;
  s.name = name;
  switch (name) {
    case ScenarioName::low: s.correlations = {0.0, 0.0, 0.0}; break;
    case ScenarioName::med: s.correlations = {0.3, -0.3, 0.3}; break;
    case ScenarioName::high: s.correlations = {0.7, 0.7, -0.7}; break;
  }
  return s;
}

ScenarioCov make_scenario_cov(const Scenario& s) {
  for (double rho : s.correlations) {
    if (rho < -1.0 || rho > 1.0) {
      throw std::invalid_argument("make_scenario_cov: correlation outside [-1, 1]");
    }
  }
  const Vector sd = s.variances.cwiseSqrt();
  Matrix sigma(3, 3);
  sigma(0, 0) = s.variances(0);
  sigma(1, 1) = s.variances(1);
  sigma(2, 2) = s.variances(2);
  sigma(0, 1) = sigma(1, 0) = s.correlations[0] * sd(0) * sd(1);
  sigma(0, 2) = sigma(2, 0) = s.correlations[1] * sd(0) * sd(2);
  sigma(1, 2) = sigma(2, 1) = s.correlations[2] * sd(1) * sd(2);

  ScenarioCov out;
  const numerics::EigenDecomposition ed = numerics::sym_eigen(sigma);
  if (ed.values.minCoeff() < 0.0) {
    out.clipped = true;
    const Matrix clipped = ed.vectors * ed.values.cwiseMax(0.0).asDiagonal() *
                           ed.vectors.transpose();
    out.sigma = 0.5 * (clipped + clipped.transpose());
  } else {
    out.sigma = sigma;
  }
  return out;
}

double true_conditional_prob(double a, double b, double c, const Matrix& sigma,
                             double x) {
  if (sigma.rows() != 3 || sigma.cols() != 3) {
    throw std::invalid_argument("true_conditional_prob: sigma must be 3x3");
  }
  const double s33 = sigma(2, 2);
  if (!(s33 > 0.0)) {
    throw std::invalid_argument("true_conditional_prob: Var(X) must be positive");
  }
  // W = a Y1 - b Y2; condition on X = x
  const double cov_wx = a * sigma(0, 2) - b * sigma(1, 2);
  const double var_w =
      a * a * sigma(0, 0) + b * b * sigma(1, 1) - 2.0 * a * b * sigma(0, 1);
  const double mu_w = cov_wx * x / s33;
  const double s2 = var_w - cov_wx * cov_wx / s33;
  if (s2 <= 0.0) return mu_w <= c ? 1.0 : 0.0;
  return numerics::std_normal_cdf((c - mu_w) / std::sqrt(s2));
}

Matrix test_function_matrix(const Matrix& y) {
  if (y.cols() != 2) {
    throw std::invalid_argument("test_function_matrix: expected two columns");
  }
  const Index n = y.rows();
  Matrix t(n, 4);
  for (Index i = 0; i < n; ++i) {
    t(i, 0) = y(i, 0) <= y(i, 1) - 0.5 ? 1.0 : 0.0;
    t(i, 1) = y(i, 0) <= y(i, 1) - 0.6 ? 1.0 : 0.0;
    t(i, 2) = y(i, 0) <= y(i, 1) - 0.7 ? 1.0 : 0.0;
    t(i, 3) = 1.0;
  }
  return t;
}

double bayes_positive_prob(const Matrix& sigma, const Eigen::Ref<const Vector>& x12) {
  if (sigma.rows() != 3 || sigma.cols() != 3 || x12.size() != 2) {
    throw std::invalid_argument("bayes_positive_prob: shape mismatch");
  }
  const Matrix s11 = sigma.topLeftCorner(2, 2);
  const Vector s12 = sigma.topRightCorner(2, 1);
  const Vector w = s11.ldlt().solve(s12);
  const double mu = w.dot(x12);
  const double var = sigma(2, 2) - s12.dot(w);
  if (var <= 0.0) return mu > 0.0 ? 1.0 : 0.0;
  return numerics::std_normal_cdf(mu / std::sqrt(var));
}

std::string csv_header() {
  return "scenario,variant,n_train,seed,sigma_x,sigma_y,eps,lambda,m_x,m_y,"
         "val_loss,oracle_loss,posfrac,normdev,fit_seconds";
}

std::string csv_line(const ResultRow& r) {
  std::ostringstream os;
  os << csv_field(r.scenario) << ',' << csv_field(r.variant) << ',' << r.n_train << ','
     << r.seed << ',' << format_double(r.sigma_x) << ',' << format_double(r.sigma_y)
     << ',' << format_double(r.eps) << ',' << format_double(r.lambda) << ',' << r.m_x
     << ',' << r.m_y << ',' << format_double(r.val_loss) << ','
     << format_double(r.oracle_loss) << ',' << format_double(r.posfrac) << ','
     << format_double(r.normdev) << ',' << format_double(r.fit_seconds);
  return os.str();
}

void emit_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_line(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path);
}

std::vector<ResultRow> parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("parse_csv: empty file");
  if (line != csv_header()) throw std::runtime_error("parse_csv: unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 15) throw std::runtime_error("parse_csv: bad field count");
    ResultRow r;
    r.scenario = fields[0];
    r.variant = fields[1];
    r.n_train = std::stoll(fields[2]);
    r.seed = std::stoull(fields[3]);
    r.sigma_x = std::strtod(fields[4].c_str(), nullptr);
    r.sigma_y = std::strtod(fields[5].c_str(), nullptr);
    r.eps = std::strtod(fields[6].c_str(), nullptr);
    r.lambda = std::strtod(fields[7].c_str(), nullptr);
    r.m_x = std::stoll(fields[8]);
    r.m_y = std::stoll(fields[9]);
    r.val_loss = std::strtod(fields[10].c_str(), nullptr);
    r.oracle_loss = std::strtod(fields[11].c_str(), nullptr);
    r.posfrac = std::strtod(fields[12].c_str(), nullptr);
    r.normdev = std::strtod(fields[13].c_str(), nullptr);
    r.fit_seconds = std::strtod(fields[14].c_str(), nullptr);
    rows.push_back(std::move(r));
  }
  return rows;
}

DataSplit draw_split(const Scenario& s, Index n_train, Index n_val, Index n_test,
                     numerics::RngSeed seed) {
  const ScenarioCov cov = make_scenario_cov(s);
  DataSplit split;
  split.train = numerics::sample_mvn(s.mu, cov.sigma, n_train,
                                     numerics::substream(seed, 1));
  split.val =
      numerics::sample_mvn(s.mu, cov.sigma, n_val, numerics::substream(seed, 2));
  split.test =
      numerics::sample_mvn(s.mu, cov.sigma, n_test, numerics::substream(seed, 3));
  return split;
}

std::pair<SelectedParams, FittedModel> validate_and_fit(
    const ExperimentConfig& config, const DataSplit& split, const std::string& variant,
    bool classification_loss) {
  check_known_variant(variant);
  std::vector<std::string> failures;

  if (!classification_loss) {
    if (variant == "klr") {
      throw std::invalid_argument("validate_and_fit: klr needs the classification loss");
    }
    const PairedSample train = prediction_sample(split.train);
    const Matrix tmat_train = test_function_matrix(train.y);
    const Matrix tmat_val = test_function_matrix(split.val.leftCols(2));
    const Matrix val_x = split.val.rightCols(1);
    if (variant == "traditional") {
      auto loss = [&](const TraditionalModel& m) {
        const Matrix ce = traditional_conditional_expectation_batch(m, tmat_train, val_x);
        return (tmat_val - ce).squaredNorm();
      };
      TraditionalChoice best = sweep_traditional(config, train, loss, failures);
      if (!best.model) throw_all_failed(variant, failures);
      return {best.params, FittedModel{std::move(*best.model)}};
    }
    auto loss = [&](const JointDensityModel& m) {
      const Matrix ce = conditional_expectation_batch(m, tmat_train, val_x);
      return (tmat_val - ce).squaredNorm();
    };
    std::vector<Variant> vs{variant_from_string(variant)};
    auto best = sweep_embedding(config, train, vs, loss, failures);
    if (!best[0].model) throw_all_failed(variant, failures);
    return {best[0].params, FittedModel{std::move(*best[0].model)}};
  }

  // classification roles
  const PairedSample train = classification_sample(split.train);
  const Vector labels_train = sign_labels(train.y.col(0));
  const Vector labels_val = sign_labels(split.val.col(2));
  const Matrix val_x = split.val.leftCols(2);
  Matrix f_train(train.n(), 1);
  f_train.col(0) = (labels_train.array() + 1.0) / 2.0;

  if (variant == "klr") {
    auto loss = [&](const KlrModel& m) {
      return logistic_loss(klr_predict_batch(m, val_x), labels_val);
    };
    KlrChoice best = sweep_klr(config, train.x, labels_train, loss, failures);
    if (!best.model) throw_all_failed(variant, failures);
    return {best.params, FittedModel{std::move(*best.model)}};
  }
  if (variant == "traditional") {
    auto loss = [&](const TraditionalModel& m) {
      const Matrix p = traditional_conditional_expectation_batch(m, f_train, val_x);
      return logistic_loss(p.col(0), labels_val);
    };
    TraditionalChoice best = sweep_traditional(config, train, loss, failures);
    if (!best.model) throw_all_failed(variant, failures);
    return {best.params, FittedModel{std::move(*best.model)}};
  }
  auto loss = [&](const JointDensityModel& m) {
    const Matrix p = conditional_expectation_batch(m, f_train, val_x);
    return logistic_loss(p.col(0), labels_val);
  };
  std::vector<Variant> vs{variant_from_string(variant)};
  auto best = sweep_embedding(config, train, vs, loss, failures);
  if (!best[0].model) throw_all_failed(variant, failures);
  return {best[0].params, FittedModel{std::move(*best[0].model)}};
}

std::vector<ResultRow> run_prediction_experiment(const ExperimentConfig& config) {
  check_config(config);
  for (const auto& v : config.variants) {
    if (v == "klr") {
      throw std::invalid_argument("prediction experiment does not support klr");
    }
  }
  const Scenario scenario = Scenario::by_name(config.scenario);
  warn_if_clipped(scenario);
  const Matrix sigma = make_scenario_cov(scenario).sigma;

  struct Task {
    std::uint64_t seed;
    Index n;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : config.seeds) {
    for (Index n : config.n_train) tasks.push_back({seed, n});
  }
  std::vector<std::vector<ResultRow>> slots(tasks.size());

  parallel_tasks(config.workers, static_cast<Index>(tasks.size()), [&](Index ti) {
    const auto [seed, n] = tasks[static_cast<std::size_t>(ti)];
    const Index n_val = resolved_n_val(config, n);
    const DataSplit split =
        draw_split(scenario, n, n_val, config.n_test, numerics::RngSeed{seed});
    const PairedSample train = prediction_sample(split.train);
    const Matrix tmat_train = test_function_matrix(train.y);
    const Matrix tmat_val = test_function_matrix(split.val.leftCols(2));
    const Matrix val_x = split.val.rightCols(1);
    const Matrix test_x = split.test.rightCols(1);
    const Matrix truth = truth_matrix(sigma, test_x);

    std::vector<Variant> embedding_variants;
    for (const auto& v : config.variants) {
      if (is_embedding(v)) embedding_variants.push_back(variant_from_string(v));
    }
    std::vector<std::string> failures;
    auto embed_loss = [&](const JointDensityModel& m) {
      const Matrix ce = conditional_expectation_batch(m, tmat_train, val_x);
      return (tmat_val - ce).squaredNorm();
    };
    auto embed_best =
        sweep_embedding(config, train, embedding_variants, embed_loss, failures);

    TraditionalChoice trad_best;
    const bool want_traditional =
        std::find(config.variants.begin(), config.variants.end(), "traditional") !=
        config.variants.end();
    if (want_traditional) {
      auto loss = [&](const TraditionalModel& m) {
        const Matrix ce =
            traditional_conditional_expectation_batch(m, tmat_train, val_x);
        return (tmat_val - ce).squaredNorm();
      };
      trad_best = sweep_traditional(config, train, loss, failures);
    }

    auto summarize = [&](const Matrix& ce_test) {
      double posfrac = 0.0;
      for (Index i = 0; i < ce_test.rows(); ++i) {
        if (ce_test.row(i).minCoeff() >= -kPosTol) posfrac += 1.0;
      }
      posfrac /= static_cast<double>(ce_test.rows());
      const double oracle =
          (ce_test - truth).rowwise().squaredNorm().mean();
      const double normdev = (ce_test.col(3).array() - 1.0).abs().mean();
      return std::tuple<double, double, double>{oracle, posfrac, normdev};
    };

    std::vector<ResultRow>& rows = slots[static_cast<std::size_t>(ti)];
    for (const auto& vname : config.variants) {
      ResultRow row;
      row.scenario = to_string(config.scenario);
      row.variant = vname;
      row.n_train = n;
      row.seed = seed;
      if (vname == "traditional") {
        if (!trad_best.model) throw_all_failed(vname, failures);
        const SelectedParams sel = trad_best.params;
        auto kx = std::make_shared<GaussianKernel>(sel.sigma_x);
        const double t0 = now_seconds();
        const TraditionalModel model = traditional_fit(train, kx, sel.lambda);
        const double t1 = now_seconds();
        const Matrix ce_test =
            traditional_conditional_expectation_batch(model, tmat_train, test_x);
        const auto [oracle, posfrac, normdev] = summarize(ce_test);
        row.sigma_x = sel.sigma_x;
        row.lambda = sel.lambda;
        row.val_loss = sel.val_loss;
        row.oracle_loss = oracle;
        row.posfrac = posfrac;
        row.normdev = normdev;
        row.fit_seconds = t1 - t0;
      } else {
        const std::size_t vi = static_cast<std::size_t>(
            std::distance(embedding_variants.begin(),
                          std::find(embedding_variants.begin(),
                                    embedding_variants.end(),
                                    variant_from_string(vname))));
        if (!embed_best[vi].model) throw_all_failed(vname, failures);
        const SelectedParams sel = embed_best[vi].params;
        auto kx = std::make_shared<GaussianKernel>(sel.sigma_x);
        auto ky = std::make_shared<GaussianKernel>(sel.sigma_y);
        const double t0 = now_seconds();
        const JointDensityModel model =
            fit(train, kx, ky, sel.eps, 0.0, variant_from_string(vname));
        const double t1 = now_seconds();
        const Matrix ce_test = conditional_expectation_batch(model, tmat_train, test_x);
        const auto [oracle, posfrac, normdev] = summarize(ce_test);
        row.sigma_x = sel.sigma_x;
        row.sigma_y = sel.sigma_y;
        row.eps = sel.eps;
        row.m_x = model.m_x();
        row.m_y = model.m_y();
        row.val_loss = sel.val_loss;
        row.oracle_loss = oracle;
        row.posfrac = posfrac;
        row.normdev = normdev;
        row.fit_seconds = t1 - t0;
      }
      rows.push_back(std::move(row));
    }
  });

  std::vector<ResultRow> rows;
  for (auto& slot : slots) {
    for (auto& r : slot) rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> run_classification_experiment(const ExperimentConfig& config) {
  check_config(config);
  for (const auto& v : config.variants) {
    if (v == "normalized") {
      throw std::invalid_argument("classification experiment does not support normalized");
    }
  }
  const Scenario scenario = Scenario::by_name(config.scenario);
  warn_if_clipped(scenario);

  struct Task {
    std::uint64_t seed;
    Index n;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : config.seeds) {
    for (Index n : config.n_train) tasks.push_back({seed, n});
  }
  std::vector<std::vector<ResultRow>> slots(tasks.size());

  parallel_tasks(config.workers, static_cast<Index>(tasks.size()), [&](Index ti) {
    const auto [seed, n] = tasks[static_cast<std::size_t>(ti)];
    const Index n_val = resolved_n_val(config, n);
    const DataSplit split =
        draw_split(scenario, n, n_val, config.n_test, numerics::RngSeed{seed});
    const PairedSample train = classification_sample(split.train);
    const Vector labels_train = sign_labels(train.y.col(0));
    const Vector labels_val = sign_labels(split.val.col(2));
    const Vector labels_test = sign_labels(split.test.col(2));
    const Matrix val_x = split.val.leftCols(2);
    const Matrix test_x = split.test.leftCols(2);
    Matrix f_train(train.n(), 1);
    f_train.col(0) = (labels_train.array() + 1.0) / 2.0;
    Matrix ones_train = Matrix::Ones(train.n(), 1);

    std::vector<Variant> embedding_variants;
    for (const auto& v : config.variants) {
      if (is_embedding(v)) embedding_variants.push_back(variant_from_string(v));
    }
    std::vector<std::string> failures;
    auto embed_loss = [&](const JointDensityModel& m) {
      const Matrix p = conditional_expectation_batch(m, f_train, val_x);
      return logistic_loss(p.col(0), labels_val);
    };
    auto embed_best =
        sweep_embedding(config, train, embedding_variants, embed_loss, failures);

    TraditionalChoice trad_best;
    if (std::find(config.variants.begin(), config.variants.end(), "traditional") !=
        config.variants.end()) {
      auto loss = [&](const TraditionalModel& m) {
        const Matrix p = traditional_conditional_expectation_batch(m, f_train, val_x);
        return logistic_loss(p.col(0), labels_val);
      };
      trad_best = sweep_traditional(config, train, loss, failures);
    }
    KlrChoice klr_best;
    if (std::find(config.variants.begin(), config.variants.end(), "klr") !=
        config.variants.end()) {
      auto loss = [&](const KlrModel& m) {
        return logistic_loss(klr_predict_batch(m, val_x), labels_val);
      };
      klr_best = sweep_klr(config, train.x, labels_train, loss, failures);
    }

    auto mae_of = [&](const Vector& probs_plus) {
      double mae = 0.0;
      for (Index i = 0; i < labels_test.size(); ++i) {
        const double target = labels_test(i) > 0.0 ? 1.0 : 0.0;
        mae += std::abs(target - probs_plus(i));
      }
      return mae / static_cast<double>(labels_test.size());
    };
    auto posfrac_of = [&](const Vector& probs_plus) {
      double f = 0.0;
      for (Index i = 0; i < probs_plus.size(); ++i) {
        if (probs_plus(i) >= -kPosTol) f += 1.0;
      }
      return f / static_cast<double>(probs_plus.size());
    };

    std::vector<ResultRow>& rows = slots[static_cast<std::size_t>(ti)];
    for (const auto& vname : config.variants) {
      ResultRow row;
      row.scenario = to_string(config.scenario);
      row.variant = vname;
      row.n_train = n;
      row.seed = seed;
      if (vname == "klr") {
        if (!klr_best.model) throw_all_failed(vname, failures);
        const SelectedParams sel = klr_best.params;
        auto kx = std::make_shared<GaussianKernel>(sel.sigma_x);
        const double t0 = now_seconds();
        const KlrModel model = klr_fit(PointSet{train.x}, labels_train, kx, sel.lambda);
        const double t1 = now_seconds();
        const Vector p = klr_predict_batch(model, test_x);
        row.sigma_x = sel.sigma_x;
        row.lambda = sel.lambda;
        row.val_loss = sel.val_loss;
        row.oracle_loss = mae_of(p);
        row.posfrac = 1.0;
        row.normdev = 0.0;
        row.fit_seconds = t1 - t0;
      } else if (vname == "traditional") {
        if (!trad_best.model) throw_all_failed(vname, failures);
        const SelectedParams sel = trad_best.params;
        auto kx = std::make_shared<GaussianKernel>(sel.sigma_x);
        const double t0 = now_seconds();
        const TraditionalModel model = traditional_fit(train, kx, sel.lambda);
        const double t1 = now_seconds();
        const Vector p =
            traditional_conditional_expectation_batch(model, f_train, test_x).col(0);
        const Vector ones_ce =
            traditional_conditional_expectation_batch(model, ones_train, test_x).col(0);
        row.sigma_x = sel.sigma_x;
        row.lambda = sel.lambda;
        row.val_loss = sel.val_loss;
        row.oracle_loss = mae_of(p);
        row.posfrac = posfrac_of(p);
        row.normdev = (ones_ce.array() - 1.0).abs().mean();
        row.fit_seconds = t1 - t0;
      } else {
        const std::size_t vi = static_cast<std::size_t>(
            std::distance(embedding_variants.begin(),
                          std::find(embedding_variants.begin(),
                                    embedding_variants.end(),
                                    variant_from_string(vname))));
        if (!embed_best[vi].model) throw_all_failed(vname, failures);
        const SelectedParams sel = embed_best[vi].params;
        auto kx = std::make_shared<GaussianKernel>(sel.sigma_x);
        auto ky = std::make_shared<GaussianKernel>(sel.sigma_y);
        const double t0 = now_seconds();
        const JointDensityModel model =
            fit(train, kx, ky, sel.eps, 0.0, variant_from_string(vname));
        const double t1 = now_seconds();
        const Vector p = conditional_expectation_batch(model, f_train, test_x).col(0);
        const Vector ones_ce =
            conditional_expectation_batch(model, ones_train, test_x).col(0);
        row.sigma_x = sel.sigma_x;
        row.sigma_y = sel.sigma_y;
        row.eps = sel.eps;
        row.m_x = model.m_x();
        row.m_y = model.m_y();
        row.val_loss = sel.val_loss;
        row.oracle_loss = mae_of(p);
        row.posfrac = posfrac_of(p);
        row.normdev = (ones_ce.array() - 1.0).abs().mean();
        row.fit_seconds = t1 - t0;
      }
      rows.push_back(std::move(row));
    }
  });

  std::vector<ResultRow> rows;
  for (auto& slot : slots) {
    for (auto& r : slot) rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> run_timing_experiment(const ExperimentConfig& config) {
  check_config(config);
  for (const auto& v : config.variants) {
    if (v == "klr") {
      throw std::invalid_argument("timing experiment does not support klr");
    }
  }
  const Scenario scenario = Scenario::by_name(config.scenario);
  warn_if_clipped(scenario);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double sx = config.sigma_grid.front();
  const double eps = config.eps_grid.front();
  const double trad_lambda = config.lambda_grid.front();

  std::vector<ResultRow> rows;
  for (std::uint64_t seed : config.seeds) {
    for (Index n : config.n_train) {
      const DataSplit split = draw_split(scenario, n, 1, 1, numerics::RngSeed{seed});
      const PairedSample train = prediction_sample(split.train);
      for (const auto& vname : config.variants) {
        ResultRow row;
        row.scenario = to_string(config.scenario);
        row.variant = vname;
        row.n_train = n;
        row.seed = seed;
        row.val_loss = nan;
        row.oracle_loss = nan;
        row.posfrac = nan;
        row.normdev = nan;
        if (vname == "traditional") {
          row.sigma_x = sx;
          row.lambda = trad_lambda;
          if (n > config.traditional_cap) {
            row.fit_seconds = nan;  // skipped above the cap
          } else {
            auto kx = std::make_shared<GaussianKernel>(sx);
            const double t0 = now_seconds();
            const TraditionalModel model = traditional_fit(train, kx, trad_lambda);
            row.fit_seconds = now_seconds() - t0;
            (void)model;
          }
        } else {
          auto kx = std::make_shared<GaussianKernel>(sx);
          auto ky = std::make_shared<GaussianKernel>(sx);
          row.sigma_x = sx;
          row.sigma_y = sx;
          row.eps = eps;
          const double t0 = now_seconds();
          const JointDensityModel model =
              fit(train, kx, ky, eps, 0.0, variant_from_string(vname));
          row.fit_seconds = now_seconds() - t0;
          row.m_x = model.m_x();
          row.m_y = model.m_y();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

}  // namespace jdl::harness
