// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace jdl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace numerics {

/// True if a is square and entrywise symmetric within rel * max|a|.
bool is_symmetric(const Matrix& a, double rel = 1e-12);

/// Spectral decomposition of a symmetric matrix, eigenvalues descending,
/// columns of `vectors` orthonormal.
struct EigenDecomposition {
  Vector values;
  Matrix vectors;
};

/// Throws std::invalid_argument on non-symmetric input and
/// std::runtime_error if the eigensolver does not converge.
EigenDecomposition sym_eigen(const Matrix& a);

/// Lower-triangular L with L L^T = a. Throws std::runtime_error
/// ("not positive definite") when a pivot is non-positive.
Matrix cholesky_dense(const Matrix& a);

/// Solves l x = b (or l^T x = b when transposed) by substitution.
/// l must be lower triangular with nonzero diagonal.
Matrix triangular_solve(const Matrix& l, const Matrix& b, bool transposed = false);

struct RngSeed {
  std::uint64_t value = 0;
};

/// Derives a seed for a disjoint substream (splitmix64 mixing).
RngSeed substream(RngSeed base, std::uint64_t tag);

/// xoshiro256++ with splitmix64 seeding; normals via Box-Muller.
/// Identical seed produces an identical sample stream.
class Rng {
 public:
  explicit Rng(RngSeed seed);

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  /// Standard normal.
  double normal();

 private:
  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// n draws from N(mean, cov), one per row. cov may be positive
/// semidefinite; eigenvalues in [-1e-10, 0) are clipped to zero,
/// anything below -1e-10 is an error.
Matrix sample_mvn(const Vector& mean, const Matrix& cov, Index n, RngSeed seed);
Matrix sample_mvn(const Vector& mean, const Matrix& cov, Index n, Rng& rng);

/// Standard normal CDF, absolute error below 1e-10.
double std_normal_cdf(double t);

/// Column-major flat index: col * m_y + row.
Index vec_index(Index row, Index col, Index m_y);

}  // namespace numerics
}  // namespace jdl
