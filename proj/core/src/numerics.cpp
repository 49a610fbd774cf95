// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace jdl::numerics {

bool is_symmetric(const Matrix& a, double rel) {
  if (a.rows() != a.cols()) return false;
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale == 0.0) return true;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel * scale;
}

EigenDecomposition sym_eigen(const Matrix& a) {
  if (!is_symmetric(a)) {
    throw std::invalid_argument("sym_eigen: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("sym_eigen: eigensolver did not converge");
  }
  const Index n = a.rows();
  EigenDecomposition out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  (void)n;
  return out;
}

Matrix cholesky_dense(const Matrix& a) {
  if (!is_symmetric(a)) {
    throw std::invalid_argument("cholesky_dense: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("cholesky_dense: matrix not positive definite");
  }
  return llt.matrixL();
}

Matrix triangular_solve(const Matrix& l, const Matrix& b, bool transposed) {
  if (l.rows() != l.cols()) {
    throw std::invalid_argument("triangular_solve: matrix must be square");
  }
  if (l.rows() != b.rows()) {
    throw std::invalid_argument("triangular_solve: dimension mismatch");
  }
  if (l.diagonal().cwiseAbs().minCoeff() == 0.0) {
    throw std::runtime_error("triangular_solve: singular triangular matrix");
  }
  if (transposed) {
    return l.transpose().triangularView<Eigen::Upper>().solve(b);
  }
  return l.triangularView<Eigen::Lower>().solve(b);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngSeed substream(RngSeed base, std::uint64_t tag) {
  std::uint64_t s = base.value ^ (0xA0761D6478BD642FULL * (tag + 1));
  return RngSeed{splitmix64(s)};
}

Rng::Rng(RngSeed seed) {
  std::uint64_t s = seed.value;
  for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * M_PI * u2;
  spare_ = r * std::sin(phi);
  has_spare_ = true;
  return r * std::cos(phi);
}

Matrix sample_mvn(const Vector& mean, const Matrix& cov, Index n, RngSeed seed) {
  Rng rng(seed);
  return sample_mvn(mean, cov, n, rng);
}

Matrix sample_mvn(const Vector& mean, const Matrix& cov, Index n, Rng& rng) {
  const Index d = mean.size();
  if (cov.rows() != d || cov.cols() != d) {
    throw std::invalid_argument("sample_mvn: covariance shape does not match mean");
  }
  if (!is_symmetric(cov, 1e-10)) {
    throw std::invalid_argument("sample_mvn: covariance is not symmetric");
  }
  Matrix factor;
  bool have_factor = false;
  if (cov.isZero(0.0)) {
    factor = Matrix::Zero(d, d);
    have_factor = true;
  } else {
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success) {
      factor = llt.matrixL();
      have_factor = true;
    }
  }
  if (!have_factor) {
    // Semidefinite case: factor through the spectrum, clipping roundoff.
    EigenDecomposition ed = sym_eigen(cov);
    if (ed.values.minCoeff() < -1e-10) {
      throw std::invalid_argument("sample_mvn: covariance is not positive semidefinite");
    }
    factor = ed.vectors * ed.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  Matrix z(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) z(i, j) = rng.normal();
  }
  Matrix out = z * factor.transpose();
  out.rowwise() += mean.transpose();
  return out;
}

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t * M_SQRT1_2); }

Index vec_index(Index row, Index col, Index m_y) {
  if (m_y < 1) throw std::out_of_range("vec_index: m_y must be positive");
  if (row < 0 || row >= m_y || col < 0) {
    throw std::out_of_range("vec_index: index out of range");
  }
  return col * m_y + row;
}

}  // namespace jdl::numerics
