// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/lowrank.hpp"

#include <algorithm>
#include <stdexcept>

namespace jdl::lowrank {

namespace {

constexpr double kPivotFloor = 1e-12;

Index argmax_lowest(const Vector& d) {
  Index best = 0;
  for (Index i = 1; i < d.size(); ++i) {
    if (d(i) > d(best)) best = i;
  }
  return best;
}

PivotedCholeskyFactor factorize(const Kernel& k, const PointSet& pts, double eps,
                                Index max_rank, bool want_b) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("pivoted_cholesky: eps must be positive");
  }
  const Index n = pts.n();
  if (n < 1) throw std::invalid_argument("pivoted_cholesky: empty point set");
  if (max_rank < 0) max_rank = std::min<Index>(n, 2000);
  max_rank = std::min(max_rank, n);

  Vector d(n);
  k.diag(pts, d);
  double err = d.sum();
  if (err <= eps) {
    throw std::invalid_argument(
        "pivoted_cholesky: eps is at or above the initial trace, the factor "
        "would be empty");
  }

  PivotedCholeskyFactor out;
  Index cap = std::min<Index>(max_rank, 64);
  out.l.resize(n, cap);
  Matrix bmat;
  if (want_b) bmat.setZero(n, cap);
  out.termination = Termination::tolerance_reached;

  Index m = 0;
  Vector col(n);
  while (err > eps) {
    if (m == max_rank) {
      out.termination = Termination::max_rank_reached;
      break;
    }
    const Index j = argmax_lowest(d);
    if (d(j) <= kPivotFloor) {
      out.termination = Termination::exact_rank_reached;
      break;
    }
    if (m == cap) {
      cap = std::min<Index>(max_rank, cap * 2);
      out.l.conservativeResize(Eigen::NoChange, cap);
      if (want_b) bmat.conservativeResize(Eigen::NoChange, cap);
    }
    k.column(pts, j, col);
    const double s = std::sqrt(d(j));
    if (m > 0) {
      col.noalias() -= out.l.leftCols(m) * out.l.row(j).head(m).transpose();
      if (want_b) {
        Vector bcol = -(bmat.leftCols(m) * out.l.row(j).head(m).transpose());
        bcol(j) += 1.0;
        bmat.col(m) = bcol / s;
      }
    } else if (want_b) {
      bmat.col(0).setZero();
      bmat(j, 0) = 1.0 / s;
    }
    out.l.col(m) = col / s;
    out.pivots.push_back(j);
    d -= out.l.col(m).cwiseAbs2();
    d = d.cwiseMax(0.0);
    err = d.sum();
    ++m;
  }

  out.l.conservativeResize(Eigen::NoChange, m);
  if (want_b) {
    bmat.conservativeResize(Eigen::NoChange, m);
    out.b = std::move(bmat);
  }
  out.residual_diag = std::move(d);
  out.trace_error = err;
  return out;
}

}  // namespace

PivotedCholeskyFactor pivoted_cholesky(const Kernel& k, const PointSet& pts,
                                       double eps, Index max_rank) {
  return factorize(k, pts, eps, max_rank, /*want_b=*/false);
}

PivotedCholeskyFactor biorthogonal_cholesky(const Kernel& k, const PointSet& pts,
                                            double eps, Index max_rank) {
  return factorize(k, pts, eps, max_rank, /*want_b=*/true);
}

DoublyOrthogonalBasis doubly_orthogonal(const PivotedCholeskyFactor& f,
                                        const Kernel& k, const PointSet& pts) {
  if (!f.b) {
    throw std::invalid_argument(
        "doubly_orthogonal: factor lacks the biorthogonal basis, use "
        "biorthogonal_cholesky");
  }
  const Index m = f.rank();
  if (m < 1) throw std::invalid_argument("doubly_orthogonal: empty factor");

  // U(i,:) = B(p_i,:) are the compressed biorthogonal rows; together with
  // the spectral factor V of L^T L this yields q with q^T K(p,p) q = I.
  Matrix u(m, m);
  for (Index i = 0; i < m; ++i) u.row(i) = f.b->row(f.pivots[i]);

  const Matrix ltl = f.l.transpose() * f.l;
  numerics::EigenDecomposition ed = numerics::sym_eigen(ltl);

  DoublyOrthogonalBasis out;
  out.coeff.noalias() = u * ed.vectors;
  out.eigenvalues = ed.values.cwiseMax(0.0);
  out.sample_values.noalias() = f.l * ed.vectors;
  out.n_atoms = pts.n();
  out.pivot_points.resize(m, pts.dim());
  for (Index i = 0; i < m; ++i) out.pivot_points.row(i) = pts.points.row(f.pivots[i]);
  out.unit_diagonal_kernel = k.unit_diagonal();

  if (!out.coeff.allFinite()) {
    throw std::runtime_error(
        "doubly_orthogonal: compressed system is numerically singular, "
        "increase eps");
  }
  return out;
}

void basis_eval(const DoublyOrthogonalBasis& b, const Kernel& k,
                const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out) {
  const Index m = b.rank();
  if (z.size() != b.pivot_points.cols()) {
    throw std::invalid_argument("basis_eval: dimension mismatch");
  }
  Vector kv(m);
  for (Index i = 0; i < m; ++i) {
    kv(i) = k.eval(z, b.pivot_points.row(i).transpose());
  }
  out.noalias() = b.coeff.transpose() * kv;
}

Vector basis_eval(const DoublyOrthogonalBasis& b, const Kernel& k,
                  const Eigen::Ref<const Vector>& z) {
  Vector out(b.rank());
  basis_eval(b, k, z, out);
  return out;
}

Matrix basis_eval_batch(const DoublyOrthogonalBasis& b, const Kernel& k,
                        const Matrix& zs) {
  const Index t = zs.rows();
  const Index m = b.rank();
  if (zs.cols() != b.pivot_points.cols()) {
    throw std::invalid_argument("basis_eval_batch: dimension mismatch");
  }
  Matrix kv(t, m);
  if (const auto* g = dynamic_cast<const GaussianKernel*>(&k)) {
    const double c = -1.0 / (2.0 * g->sigma() * g->sigma());
    for (Index j = 0; j < m; ++j) {
      kv.col(j) =
          ((zs.rowwise() - b.pivot_points.row(j)).rowwise().squaredNorm() * c)
              .array()
              .exp();
    }
  } else {
    for (Index i = 0; i < t; ++i) {
      for (Index j = 0; j < m; ++j) {
        kv(i, j) = k.eval(zs.row(i).transpose(), b.pivot_points.row(j).transpose());
      }
    }
  }
  return kv * b.coeff;
}

TensorBasis tensor_lowrank(const PointSet& xs, const Kernel& kx, const PointSet& ys,
                           const Kernel& ky, double eps, Index max_rank) {
  if (xs.n() != ys.n()) {
    throw std::invalid_argument("tensor_lowrank: sample sizes differ");
  }
  TensorBasis out;
  const PivotedCholeskyFactor fx = biorthogonal_cholesky(kx, xs, eps, max_rank);
  out.x = doubly_orthogonal(fx, kx, xs);
  const PivotedCholeskyFactor fy = biorthogonal_cholesky(ky, ys, eps, max_rank);
  out.y = doubly_orthogonal(fy, ky, ys);
  return out;
}

}  // namespace jdl::lowrank
