// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <memory>
#include <string>

#include "jdlearn/lowrank.hpp"
#include "jdlearn/qpsolver.hpp"

namespace jdl {

/// n paired draws; row i of x belongs with row i of y.
struct PairedSample {
  Matrix x;  // n x d_x
  Matrix y;  // n x d_y

  Index n() const { return x.rows(); }
};

enum class Variant { constrained, normalized, unconstrained };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Fitted model of the density ratio g(x,y) = prior + psi_Y(y)' H psi_X(x)
/// of the joint law against the product of its marginals. coeff_h is
/// vec(H) column-major with H of shape m_Y x m_X.
struct JointDensityModel {
  double prior = 1.0;
  lowrank::TensorBasis basis;
  Vector coeff_h;
  Variant variant = Variant::unconstrained;
  double lambda = 0.0;
  Matrix train_x;
  Matrix train_y;
  std::shared_ptr<const Kernel> kernel_x;
  std::shared_ptr<const Kernel> kernel_y;
  Matrix psi_y_train;  // n x m_Y basis values at the training y's

  Index m_x() const { return basis.x.rank(); }
  Index m_y() const { return basis.y.rank(); }
  Eigen::Map<const Matrix> h_matrix() const {
    return {coeff_h.data(), m_y(), m_x()};
  }
};

/// alpha = int psi d(P_X (x) P_Y) - int psi dP_0 over the empirical
/// measures, factored so no n^2 loop is needed.
Vector compute_alpha(const lowrank::TensorBasis& basis, const PairedSample& s);

/// Empirical L2 norms of the tensor basis functions plus ridge:
/// entry (a,b) = (lam_{X,a}/n)(lam_{Y,b}/n) + lambda.
Vector quadratic_diagonal(const lowrank::TensorBasis& basis, double lambda);

/// Equality system (I (x) r_Y ; r_X (x) I) vec(H) = 0 enforcing the
/// empirical normalization of both conditionals; r_X, r_Y are the sample
/// means of the marginal bases.
struct NormalizationRows {
  Vector r_x;  // m_X
  Vector r_y;  // m_Y

  Index num_rows() const { return r_x.size() + r_y.size(); }
  qp::SparseRowMatrix rows() const;
};

NormalizationRows normalization_rows(const lowrank::TensorBasis& basis,
                                     const PairedSample& s);

/// Conservative per-function box (-1, +1) for unit-diagonal kernels.
/// Throws for non-unit-diagonal kernels.
std::pair<Vector, Vector> positivity_bounds(const lowrank::TensorBasis& basis);

struct FitOptions {
  Index max_rank = -1;
  double qp_tol = 1e-8;
  int qp_max_iter = 20000;
};

/// Basis, alpha and the quadratic diagonal for one (kernel, eps) choice;
/// lets several variants share the expensive part of a fit.
struct PreparedFit {
  lowrank::TensorBasis basis;
  Vector alpha;
  NormalizationRows norm_rows;
};

PreparedFit prepare_fit(const PairedSample& s, const Kernel& kx, const Kernel& ky,
                        double eps, const FitOptions& opts = {});

JointDensityModel fit_variant(const PreparedFit& prep, const PairedSample& s,
                              std::shared_ptr<const Kernel> kx,
                              std::shared_ptr<const Kernel> ky, double lambda,
                              Variant variant, const FitOptions& opts = {});

JointDensityModel fit(const PairedSample& s, std::shared_ptr<const Kernel> kx,
                      std::shared_ptr<const Kernel> ky, double eps, double lambda,
                      Variant variant, const FitOptions& opts = {});

double density_eval(const JointDensityModel& model, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& y);

/// g at the paired rows of xs and ys.
Vector density_eval_batch(const JointDensityModel& model, const Matrix& xs,
                          const Matrix& ys);

/// (1/n) sum_j f_j g(x, y_j), the model conditional expectation of f(Y)
/// given X = x with f sampled on the training y's.
double conditional_expectation(const JointDensityModel& model,
                               const Eigen::Ref<const Vector>& f_on_train_y,
                               const Eigen::Ref<const Vector>& x);

/// Columns of fs are functions on the training y's; rows of xs are query
/// points. Returns a (queries x functions) matrix.
Matrix conditional_expectation_batch(const JointDensityModel& model, const Matrix& fs,
                                     const Matrix& xs);

/// Kernel ridge baseline M = (K_X + lambda I)^{-1}.
struct TraditionalModel {
  Matrix m_matrix;
  Matrix train_x;
  Matrix train_y;
  std::shared_ptr<const Kernel> kernel_x;
  double lambda = 0.0;
};

TraditionalModel traditional_fit(const PairedSample& s,
                                 std::shared_ptr<const Kernel> kx, double lambda);

double traditional_conditional_expectation(const TraditionalModel& model,
                                           const Eigen::Ref<const Vector>& f_on_train_y,
                                           const Eigen::Ref<const Vector>& x);

Matrix traditional_conditional_expectation_batch(const TraditionalModel& model,
                                                 const Matrix& fs, const Matrix& xs);

/// Kernel logistic regression baseline, damped Newton on
/// (1/n) sum log(1 + exp(-y_i (K h)_i)) + lambda h' K h.
struct KlrModel {
  Vector coeff;
  Matrix train_x;
  std::shared_ptr<const Kernel> kernel_x;
  double lambda = 0.0;
};

KlrModel klr_fit(const PointSet& x, const Vector& labels,
                 std::shared_ptr<const Kernel> kx, double lambda,
                 int max_iter = 100, double grad_tol = 1e-6);

/// Probability of label +1 at x.
double klr_predict(const KlrModel& model, const Eigen::Ref<const Vector>& x);
Vector klr_predict_batch(const KlrModel& model, const Matrix& xs);

}  // namespace jdl
