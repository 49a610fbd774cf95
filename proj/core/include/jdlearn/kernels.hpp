// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#pragma once

#include <memory>

#include "jdlearn/numerics.hpp"

namespace jdl {

/// A set of n points in R^d, one per row.
struct PointSet {
  Matrix points;

  PointSet() = default;
  explicit PointSet(Matrix pts) : points(std::move(pts)) {}

  Index n() const { return points.rows(); }
  Index dim() const { return points.cols(); }
  Eigen::Ref<const Vector> row(Index i) const { return points.row(i).transpose(); }
};

/// Positive semidefinite kernel. Column/diag access is what the
/// low-rank machinery consumes; full Gram matrices are never formed here.
class Kernel {
 public:
  virtual ~Kernel() = default;

  virtual double eval(const Eigen::Ref<const Vector>& x,
                      const Eigen::Ref<const Vector>& y) const = 0;

  /// out(i) = k(pts_i, pts_j).
  virtual void column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const;
  Vector column(const PointSet& pts, Index j) const;

  /// out(i) = k(pts_i, pts_i).
  virtual void diag(const PointSet& pts, Eigen::Ref<Vector> out) const;
  Vector diag(const PointSet& pts) const;

  virtual bool unit_diagonal() const = 0;
};

/// k(x, x') = exp(-||x - x'||^2 / (2 sigma^2)).
class GaussianKernel final : public Kernel {
 public:
  explicit GaussianKernel(double sigma);

  double sigma() const { return sigma_; }
  double eval(const Eigen::Ref<const Vector>& x,
              const Eigen::Ref<const Vector>& y) const override;
  void column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const override;
  void diag(const PointSet& pts, Eigen::Ref<Vector> out) const override;
  bool unit_diagonal() const override { return true; }

 private:
  double sigma_;
};

/// k((x,y),(x',y')) = kx(x,x') * ky(y,y') on points stored as the
/// concatenation (x, y) with dim_x leading coordinates.
class TensorKernel final : public Kernel {
 public:
  TensorKernel(std::shared_ptr<const Kernel> kx, std::shared_ptr<const Kernel> ky,
               Index dim_x, Index dim_y);

  double eval(const Eigen::Ref<const Vector>& z,
              const Eigen::Ref<const Vector>& zp) const override;
  void column(const PointSet& pts, Index j, Eigen::Ref<Vector> out) const override;
  bool unit_diagonal() const override;

  const Kernel& kernel_x() const { return *kx_; }
  const Kernel& kernel_y() const { return *ky_; }
  Index dim_x() const { return dim_x_; }
  Index dim_y() const { return dim_y_; }

 private:
  std::shared_ptr<const Kernel> kx_;
  std::shared_ptr<const Kernel> ky_;
  Index dim_x_;
  Index dim_y_;
};

}  // namespace jdl
