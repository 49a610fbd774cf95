// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/kernels.hpp"

#include <stdexcept>

namespace jdl {

void Kernel::column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const {
  if (j < 0 || j >= pts.n()) {
    throw std::out_of_range("Kernel::column: index out of range");
  }
  for (Index i = 0; i < pts.n(); ++i) {
    out(i) = eval(pts.row(i), pts.row(j));
  }
}

Vector Kernel::column(const PointSet& pts, Index j) const {
  Vector out(pts.n());
  column(pts, j, out);
  return out;
}

void Kernel::diag(const PointSet& pts, Eigen::Ref<Vector> out) const {
  if (unit_diagonal()) {
    out.setOnes();
    return;
  }
  for (Index i = 0; i < pts.n(); ++i) {
    out(i) = eval(pts.row(i), pts.row(i));
  }
}

Vector Kernel::diag(const PointSet& pts) const {
  Vector out(pts.n());
  diag(pts, out);
  return out;
}

GaussianKernel::GaussianKernel(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("GaussianKernel: sigma must be positive");
  }
}

double GaussianKernel::eval(const Eigen::Ref<const Vector>& x,
                            const Eigen::Ref<const Vector>& y) const {
  if (x.size() != y.size()) {
    throw std::invalid_argument("GaussianKernel::eval: dimension mismatch");
  }
  return std::exp(-(x - y).squaredNorm() / (2.0 * sigma_ * sigma_));
}

void GaussianKernel::column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const {
  if (j < 0 || j >= pts.n()) {
    throw std::out_of_range("GaussianKernel::column: index out of range");
  }
  out = ((pts.points.rowwise() - pts.points.row(j)).rowwise().squaredNorm() *
         (-1.0 / (2.0 * sigma_ * sigma_)))
            .array()
            .exp();
}

void GaussianKernel::diag(const PointSet& pts, Eigen::Ref<Vector> out) const {
  out.setOnes();
}

TensorKernel::TensorKernel(std::shared_ptr<const Kernel> kx,
                           std::shared_ptr<const Kernel> ky, Index dim_x, Index dim_y)
    : kx_(std::move(kx)), ky_(std::move(ky)), dim_x_(dim_x), dim_y_(dim_y) {
  if (!kx_ || !ky_) throw std::invalid_argument("TensorKernel: null marginal kernel");
  if (dim_x_ < 1 || dim_y_ < 1) {
    throw std::invalid_argument("TensorKernel: marginal dimensions must be positive");
  }
}

double TensorKernel::eval(const Eigen::Ref<const Vector>& z,
                          const Eigen::Ref<const Vector>& zp) const {
  if (z.size() != dim_x_ + dim_y_ || zp.size() != dim_x_ + dim_y_) {
    throw std::invalid_argument("TensorKernel::eval: dimension mismatch");
  }
  return kx_->eval(z.head(dim_x_), zp.head(dim_x_)) *
         ky_->eval(z.tail(dim_y_), zp.tail(dim_y_));
}

void TensorKernel::column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const {
  if (j < 0 || j >= pts.n()) {
    throw std::out_of_range("TensorKernel::column: index out of range");
  }
  if (pts.dim() != dim_x_ + dim_y_) {
    throw std::invalid_argument("TensorKernel::column: dimension mismatch");
  }
  PointSet xs{pts.points.leftCols(dim_x_)};
  PointSet ys{pts.points.rightCols(dim_y_)};
  Vector cx(pts.n()), cy(pts.n());
  kx_->column(xs, j, cx);
  ky_->column(ys, j, cy);
  out = cx.cwiseProduct(cy);
}

bool TensorKernel::unit_diagonal() const {
  return kx_->unit_diagonal() && ky_->unit_diagonal();
}

}  // namespace jdl
