// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <optional>
#include <vector>

#include "jdlearn/kernels.hpp"

namespace jdl::lowrank {

enum class Termination {
  tolerance_reached,   // trace residual dropped below eps
  max_rank_reached,    // rank cap hit before eps
  exact_rank_reached,  // next pivot at the numerical floor, matrix is
                       // numerically rank deficient
};

/// Greedy rank-m factor K ~ L L^T with pivot bookkeeping. When built by
/// biorthogonal_cholesky, b holds the basis with B^T L = I_m.
struct PivotedCholeskyFactor {
  Matrix l;                           // n x m
  std::vector<Index> pivots;          // m distinct indices
  Vector residual_diag;               // n, clamped nonnegative
  double trace_error = 0.0;           // ||residual_diag||_1 at exit
  std::optional<Matrix> b;            // n x m biorthogonal basis
  Termination termination = Termination::tolerance_reached;

  Index rank() const { return l.cols(); }
};

/// Diagonally pivoted Cholesky, stopping at trace residual <= eps or at
/// max_rank columns (default min(n, 2000)). Ties in the pivot search go to
/// the lowest index. A pivot at or below the 1e-12 floor stops the loop
/// with exact_rank_reached. Throws if eps already exceeds the initial
/// trace (a rank-0 factor is not usable).
PivotedCholeskyFactor pivoted_cholesky(const Kernel& k, const PointSet& pts,
                                       double eps, Index max_rank = -1);

/// Same factor, pivots and tie-breaking as pivoted_cholesky, additionally
/// accumulating the biorthogonal basis B with B^T L = I_m.
PivotedCholeskyFactor biorthogonal_cholesky(const Kernel& k, const PointSet& pts,
                                            double eps, Index max_rank = -1);

/// Basis psi_i simultaneously orthonormal in the RKHS and orthogonal in
/// the empirical L2 inner product: psi(z) = [k(z, z_{p_1}), ...] * coeff.
struct DoublyOrthogonalBasis {
  Matrix pivot_points;   // m x d, the selected sample points
  Matrix coeff;          // m x m, q = U V
  Vector eigenvalues;    // m, descending, eigenvalues of L^T L
  Index n_atoms = 0;     // sample size N behind L
  Matrix sample_values;  // N x m, basis values at the factorization sample (= L V)
  bool unit_diagonal_kernel = false;

  Index rank() const { return coeff.cols(); }
};

/// Requires a factor from biorthogonal_cholesky. Throws std::runtime_error
/// advising a larger eps when the compressed system is numerically singular.
DoublyOrthogonalBasis doubly_orthogonal(const PivotedCholeskyFactor& f,
                                        const Kernel& k, const PointSet& pts);

void basis_eval(const DoublyOrthogonalBasis& b, const Kernel& k,
                const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out);
Vector basis_eval(const DoublyOrthogonalBasis& b, const Kernel& k,
                  const Eigen::Ref<const Vector>& z);

/// Rows of `out` are basis values at the rows of `zs` (t x m).
Matrix basis_eval_batch(const DoublyOrthogonalBasis& b, const Kernel& k,
                        const Matrix& zs);

/// V = V_X (x) V_Y, built by factorizing the marginals separately.
struct TensorBasis {
  DoublyOrthogonalBasis x;
  DoublyOrthogonalBasis y;

  Index dimension() const { return x.rank() * y.rank(); }
};

TensorBasis tensor_lowrank(const PointSet& xs, const Kernel& kx, const PointSet& ys,
                           const Kernel& ky, double eps, Index max_rank = -1);

}  // namespace jdl::lowrank
