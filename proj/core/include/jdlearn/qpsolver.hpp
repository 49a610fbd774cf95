// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <Eigen/Sparse>

#include <vector>

#include "jdlearn/numerics.hpp"

namespace jdl::qp {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// minimize    linear . h + (1/2) h' diag(hess_diag) h
/// subject to  eq_rows h = 0
///             h = h+ - h-,  h+ >= 0, h- >= 0
///             pos_a . h+ - pos_b . h- + prior >= 0
///
/// pos_a <= 0 <= pos_b elementwise; empty pos_a/pos_b disables the
/// sign-split inequality (equality-constrained problem).
struct QuadraticProgram {
  Vector linear;
  Vector hess_diag;
  SparseRowMatrix eq_rows;
  Vector pos_a;
  Vector pos_b;
  double prior = 1.0;

  Index dimension() const { return linear.size(); }
  Index num_eq_rows() const { return eq_rows.rows(); }
};

enum class Status { optimal, max_iter, infeasible };

struct QpSolution {
  Vector h;
  Vector h_plus;
  Vector h_minus;
  double objective = 0.0;
  Status status = Status::optimal;
  int iterations = 0;
  double primal_residual = 0.0;  // max of equality and inequality violation
  double dual_residual = 0.0;    // scaled stationarity residual
  double compl_residual = 0.0;   // |theta * (slack of the inequality)|
  /// Best-so-far residual per iteration (the returned iterate achieves the
  /// last entry); non-increasing by construction. Filled only on request.
  std::vector<double> merit_trace;
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 20000;
  double rho = 1.0;
  bool record_merit = false;
};

/// Operator-splitting solve of the full program. Residuals are measured
/// relative to max(1, |linear|_inf, |diag h|_inf). After convergence the
/// active set is re-solved exactly (polish); the returned point always
/// satisfies the constraints to near machine precision.
QpSolution solve(const QuadraticProgram& p, const SolveOptions& opts = {});
QpSolution solve(const QuadraticProgram& p, double tol, int max_iter);

/// Exact KKT solve of the equality-constrained relaxation (no sign-split
/// inequality): h = -D^{-1}(linear + eq_rows' nu) with nu from the Schur
/// system through an eigenvalue-thresholded pseudo-inverse.
QpSolution solve_equality_only(const QuadraticProgram& p, double tol = 1e-8);

/// Value of the sign-split certificate at the minimal split of h:
/// sum_i (-a_i) max(h_i,0) + b_i max(-h_i,0); the inequality reads
/// value <= prior.
double certificate_value(const Vector& h, const Vector& a, const Vector& b);

}  // namespace jdl::qp
