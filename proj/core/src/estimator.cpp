// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace jdl {

namespace {

constexpr double kDiagFloor = 1e-300;

Matrix psi_at(const lowrank::DoublyOrthogonalBasis& b, const Kernel& k,
              const Matrix& pts) {
  return lowrank::basis_eval_batch(b, k, pts);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::constrained: return "constrained";
    case Variant::normalized: return "normalized";
    case Variant::unconstrained: return "unconstrained";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "constrained") return Variant::constrained;
  if (name == "normalized") return Variant::normalized;
  if (name == "unconstrained") return Variant::unconstrained;
  throw std::invalid_argument("unknown variant: " + name);
}

Vector compute_alpha(const lowrank::TensorBasis& basis, const PairedSample& s) {
  const Index n = s.n();
  if (basis.x.n_atoms != n || basis.y.n_atoms != n) {
    throw std::invalid_argument("compute_alpha: basis was not built from this sample");
  }
  const Matrix& psi_x = basis.x.sample_values;  // n x m_X
  const Matrix& psi_y = basis.y.sample_values;  // n x m_Y
  const Vector mu_x = psi_x.colwise().mean();
  const Vector mu_y = psi_y.colwise().mean();
  const Matrix cross = psi_x.transpose() * psi_y / static_cast<double>(n);
  const Matrix a2 = mu_x * mu_y.transpose() - cross;  // (a,b) entry
  // vec over H (m_Y x m_X) column-major: flat index a*m_Y + b
  const Index mx = basis.x.rank();
  const Index my = basis.y.rank();
  Vector alpha(mx * my);
  for (Index a = 0; a < mx; ++a) {
    alpha.segment(a * my, my) = a2.row(a).transpose();
  }
  return alpha;
}

Vector quadratic_diagonal(const lowrank::TensorBasis& basis, double lambda) {
  if (lambda < 0.0) {
    throw std::invalid_argument("quadratic_diagonal: lambda must be nonnegative");
  }
  const double nx = static_cast<double>(basis.x.n_atoms);
  const double ny = static_cast<double>(basis.y.n_atoms);
  const Vector dx = basis.x.eigenvalues / nx;
  const Vector dy = basis.y.eigenvalues / ny;
  const Index mx = dx.size();
  const Index my = dy.size();
  Vector d(mx * my);
  for (Index a = 0; a < mx; ++a) {
    d.segment(a * my, my) = (dx(a) * dy.array() + lambda).matrix();
  }
  return d;
}

qp::SparseRowMatrix NormalizationRows::rows() const {
  const Index mx = r_x.size();
  const Index my = r_y.size();
  qp::SparseRowMatrix g(mx + my, mx * my);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(2 * mx * my));
  // rows 0..mx-1: r_Y' H = 0, row a touches the block a*my..a*my+my-1
  for (Index a = 0; a < mx; ++a) {
    for (Index b = 0; b < my; ++b) {
      trip.emplace_back(a, a * my + b, r_y(b));
    }
  }
  // rows mx..mx+my-1: H r_X = 0, row b touches stride-my entries
  for (Index b = 0; b < my; ++b) {
    for (Index a = 0; a < mx; ++a) {
      trip.emplace_back(mx + b, a * my + b, r_x(a));
    }
  }
  g.setFromTriplets(trip.begin(), trip.end());
  return g;
}

NormalizationRows normalization_rows(const lowrank::TensorBasis& basis,
                                     const PairedSample& s) {
  if (basis.x.n_atoms != s.n() || basis.y.n_atoms != s.n()) {
    throw std::invalid_argument(
        "normalization_rows: basis was not built from this sample");
  }
  NormalizationRows out;
  out.r_x = basis.x.sample_values.colwise().mean();
  out.r_y = basis.y.sample_values.colwise().mean();
  return out;
}

std::pair<Vector, Vector> positivity_bounds(const lowrank::TensorBasis& basis) {
  if (!basis.x.unit_diagonal_kernel || !basis.y.unit_diagonal_kernel) {
    throw std::invalid_argument(
        "positivity_bounds: bounds are only available for unit-diagonal kernels");
  }
  const Index m = basis.dimension();
  return {Vector::Constant(m, -1.0), Vector::Constant(m, 1.0)};
}

PreparedFit prepare_fit(const PairedSample& s, const Kernel& kx, const Kernel& ky,
                        double eps, const FitOptions& opts) {
  if (s.n() < 2) throw std::invalid_argument("fit: need at least two samples");
  PreparedFit prep;
  prep.basis = lowrank::tensor_lowrank(PointSet{s.x}, kx, PointSet{s.y}, ky, eps,
                                       opts.max_rank);
  prep.alpha = compute_alpha(prep.basis, s);
  prep.norm_rows = normalization_rows(prep.basis, s);
  return prep;
}

JointDensityModel fit_variant(const PreparedFit& prep, const PairedSample& s,
                              std::shared_ptr<const Kernel> kx,
                              std::shared_ptr<const Kernel> ky, double lambda,
                              Variant variant, const FitOptions& opts) {
  if (lambda < 0.0) throw std::invalid_argument("fit: lambda must be nonnegative");
  JointDensityModel model;
  model.prior = 1.0;
  model.basis = prep.basis;
  model.variant = variant;
  model.lambda = lambda;
  model.train_x = s.x;
  model.train_y = s.y;
  model.kernel_x = std::move(kx);
  model.kernel_y = std::move(ky);
  model.psi_y_train = prep.basis.y.sample_values;

  const Vector d = quadratic_diagonal(prep.basis, lambda).cwiseMax(kDiagFloor);

  switch (variant) {
    case Variant::unconstrained: {
      model.coeff_h = -prep.alpha.cwiseQuotient(d);
      break;
    }
    case Variant::normalized: {
      qp::QuadraticProgram qp;
      qp.linear = prep.alpha;
      qp.hess_diag = d;
      qp.eq_rows = prep.norm_rows.rows();
      const qp::QpSolution sol = qp::solve_equality_only(qp, opts.qp_tol);
      model.coeff_h = sol.h;
      break;
    }
    case Variant::constrained: {
      qp::QuadraticProgram qp;
      qp.linear = prep.alpha;
      qp.hess_diag = d;
      qp.eq_rows = prep.norm_rows.rows();
      std::tie(qp.pos_a, qp.pos_b) = positivity_bounds(prep.basis);
      qp.prior = model.prior;
      qp::SolveOptions sopts;
      sopts.tol = opts.qp_tol;
      sopts.max_iter = opts.qp_max_iter;
      const qp::QpSolution sol = qp::solve(qp, sopts);
      if (sol.status == qp::Status::infeasible) {
        throw std::runtime_error("fit: solver reported an infeasible program");
      }
      if (sol.status == qp::Status::max_iter) {
        throw std::runtime_error(
            "fit: solver did not converge after " + std::to_string(sol.iterations) +
            " iterations (primal " + std::to_string(sol.primal_residual) +
            ", dual " + std::to_string(sol.dual_residual) + ")");
      }
      model.coeff_h = sol.h;
      break;
    }
  }
  return model;
}

JointDensityModel fit(const PairedSample& s, std::shared_ptr<const Kernel> kx,
                      std::shared_ptr<const Kernel> ky, double eps, double lambda,
                      Variant variant, const FitOptions& opts) {
  if (!(eps > 0.0)) throw std::invalid_argument("fit: eps must be positive");
  const PreparedFit prep = prepare_fit(s, *kx, *ky, eps, opts);
  return fit_variant(prep, s, std::move(kx), std::move(ky), lambda, variant, opts);
}

double density_eval(const JointDensityModel& model, const Eigen::Ref<const Vector>& x,
                    const Eigen::Ref<const Vector>& y) {
  const Vector px = lowrank::basis_eval(model.basis.x, *model.kernel_x, x);
  const Vector py = lowrank::basis_eval(model.basis.y, *model.kernel_y, y);
  return model.prior + py.dot(model.h_matrix() * px);
}

Vector density_eval_batch(const JointDensityModel& model, const Matrix& xs,
                          const Matrix& ys) {
  if (xs.rows() != ys.rows()) {
    throw std::invalid_argument("density_eval_batch: row counts differ");
  }
  const Matrix px = psi_at(model.basis.x, *model.kernel_x, xs);  // t x m_X
  const Matrix py = psi_at(model.basis.y, *model.kernel_y, ys);  // t x m_Y
  const Matrix t = py * model.h_matrix();                        // t x m_X
  return (t.cwiseProduct(px)).rowwise().sum().array() + model.prior;
}

double conditional_expectation(const JointDensityModel& model,
                               const Eigen::Ref<const Vector>& f_on_train_y,
                               const Eigen::Ref<const Vector>& x) {
  const Index n = model.train_y.rows();
  if (f_on_train_y.size() != n) {
    throw std::invalid_argument("conditional_expectation: length mismatch");
  }
  const Vector w =
      model.h_matrix().transpose() * (model.psi_y_train.transpose() * f_on_train_y) /
      static_cast<double>(n);
  const Vector px = lowrank::basis_eval(model.basis.x, *model.kernel_x, x);
  return model.prior * f_on_train_y.mean() + w.dot(px);
}

Matrix conditional_expectation_batch(const JointDensityModel& model, const Matrix& fs,
                                     const Matrix& xs) {
  const Index n = model.train_y.rows();
  if (fs.rows() != n) {
    throw std::invalid_argument("conditional_expectation_batch: length mismatch");
  }
  const Matrix w = model.h_matrix().transpose() *
                   (model.psi_y_train.transpose() * fs) / static_cast<double>(n);
  const Matrix px = psi_at(model.basis.x, *model.kernel_x, xs);  // t x m_X
  Matrix out = px * w;                                           // t x q
  out.rowwise() += model.prior * fs.colwise().mean();
  return out;
}

TraditionalModel traditional_fit(const PairedSample& s,
                                 std::shared_ptr<const Kernel> kx, double lambda) {
  const Index n = s.n();
  if (n < 1) throw std::invalid_argument("traditional_fit: empty sample");
  if (lambda < 0.0) {
    throw std::invalid_argument("traditional_fit: lambda must be nonnegative");
  }
  const PointSet pts{s.x};
  Matrix k(n, n);
  Vector col(n);
  for (Index j = 0; j < n; ++j) {
    kx->column(pts, j, col);
    k.col(j) = col;
  }
  k.diagonal().array() += lambda;
  Eigen::LDLT<Matrix> ldlt(k);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw std::runtime_error("traditional_fit: K_X + lambda I is singular");
  }
  Matrix inv = ldlt.solve(Matrix::Identity(n, n));
  const double resid =
      (k * inv - Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
  if (!inv.allFinite() || resid > 1e-6 * std::max(1.0, k.cwiseAbs().maxCoeff())) {
    throw std::runtime_error("traditional_fit: K_X + lambda I is numerically singular");
  }
  TraditionalModel model;
  model.m_matrix = std::move(inv);
  model.train_x = s.x;
  model.train_y = s.y;
  model.kernel_x = std::move(kx);
  model.lambda = lambda;
  return model;
}

double traditional_conditional_expectation(const TraditionalModel& model,
                                           const Eigen::Ref<const Vector>& f_on_train_y,
                                           const Eigen::Ref<const Vector>& x) {
  const Index n = model.train_x.rows();
  if (f_on_train_y.size() != n) {
    throw std::invalid_argument("traditional_conditional_expectation: length mismatch");
  }
  Vector kq(n);
  const PointSet pts{model.train_x};
  for (Index i = 0; i < n; ++i) {
    kq(i) = model.kernel_x->eval(pts.row(i), x);
  }
  return f_on_train_y.dot(model.m_matrix * kq);
}

Matrix traditional_conditional_expectation_batch(const TraditionalModel& model,
                                                 const Matrix& fs, const Matrix& xs) {
  const Index n = model.train_x.rows();
  if (fs.rows() != n) {
    throw std::invalid_argument("traditional_conditional_expectation_batch: mismatch");
  }
  const Matrix w = model.m_matrix * fs;  // n x q
  const Index t = xs.rows();
  Matrix kq(t, n);
  if (const auto* g = dynamic_cast<const GaussianKernel*>(model.kernel_x.get())) {
    const double c = -1.0 / (2.0 * g->sigma() * g->sigma());
    for (Index i = 0; i < n; ++i) {
      kq.col(i) =
          ((xs.rowwise() - model.train_x.row(i)).rowwise().squaredNorm() * c)
              .array()
              .exp();
    }
  } else {
    for (Index q = 0; q < t; ++q) {
      for (Index i = 0; i < n; ++i) {
        kq(q, i) = model.kernel_x->eval(xs.row(q).transpose(),
                                        model.train_x.row(i).transpose());
      }
    }
  }
  return kq * w;
}

namespace {

double klr_objective(const Matrix& k, const Vector& labels, double lambda,
                     const Vector& h, const Vector& margins) {
  double loss = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    const double t = -labels(i) * margins(i);
    loss += t > 30.0 ? t : std::log1p(std::exp(t));
  }
  loss /= static_cast<double>(labels.size());
  return loss + lambda * h.dot(k * h);
}

}  // namespace

KlrModel klr_fit(const PointSet& x, const Vector& labels,
                 std::shared_ptr<const Kernel> kx, double lambda, int max_iter,
                 double grad_tol) {
  const Index n = x.n();
  if (labels.size() != n) throw std::invalid_argument("klr_fit: label count mismatch");
  for (Index i = 0; i < n; ++i) {
    if (labels(i) != 1.0 && labels(i) != -1.0) {
      throw std::invalid_argument("klr_fit: labels must be +-1");
    }
  }
  if (!(lambda > 0.0)) throw std::invalid_argument("klr_fit: lambda must be positive");

  Matrix k(n, n);
  Vector col(n);
  for (Index j = 0; j < n; ++j) {
    kx->column(x, j, col);
    k.col(j) = col;
  }

  Vector h = Vector::Zero(n);
  Vector margins = Vector::Zero(n);
  double obj = klr_objective(k, labels, lambda, h, margins);
  for (int iter = 0; iter < max_iter; ++iter) {
    Vector p(n), wdiag(n);
    for (Index i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(labels(i) * margins(i)));
      wdiag(i) = std::max(p(i) * (1.0 - p(i)), 1e-12);
    }
    const Vector g = (-labels.cwiseProduct(p) / static_cast<double>(n)) + 2.0 * lambda * h;
    const Vector grad = k * g;
    if (grad.norm() <= grad_tol) {
      KlrModel model;
      model.coeff = std::move(h);
      model.train_x = x.points;
      model.kernel_x = std::move(kx);
      model.lambda = lambda;
      return model;
    }
    // Newton system K (W K / n + 2 lambda I) dh = -K g; drop the leading K.
    Matrix hess = (wdiag.asDiagonal() * k) / static_cast<double>(n);
    hess.diagonal().array() += 2.0 * lambda;
    Vector dh = hess.partialPivLu().solve(-g);
    double slope = grad.dot(dh);
    if (!(slope < 0.0)) {
      dh = -grad;
      slope = -grad.squaredNorm();
    }
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector h_try = h + step * dh;
      const Vector margins_try = margins + step * (k * dh);
      const double obj_try = klr_objective(k, labels, lambda, h_try, margins_try);
      if (obj_try <= obj + 1e-4 * step * slope) {
        h = h_try;
        margins = margins_try;
        obj = obj_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  {
    Vector p(n);
    for (Index i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(labels(i) * margins(i)));
    }
    const Vector g = (-labels.cwiseProduct(p) / static_cast<double>(n)) + 2.0 * lambda * h;
    if ((k * g).norm() > grad_tol) {
      throw std::runtime_error("klr_fit: Newton iteration did not converge");
    }
  }
  KlrModel model;
  model.coeff = std::move(h);
  model.train_x = x.points;
  model.kernel_x = std::move(kx);
  model.lambda = lambda;
  return model;
}

double klr_predict(const KlrModel& model, const Eigen::Ref<const Vector>& x) {
  const Index n = model.train_x.rows();
  double f = 0.0;
  for (Index i = 0; i < n; ++i) {
    f += model.coeff(i) * model.kernel_x->eval(model.train_x.row(i).transpose(), x);
  }
  return 1.0 / (1.0 + std::exp(-f));
}

Vector klr_predict_batch(const KlrModel& model, const Matrix& xs) {
  Vector out(xs.rows());
  for (Index q = 0; q < xs.rows(); ++q) {
    out(q) = klr_predict(model, xs.row(q).transpose());
  }
  return out;
}

}  // namespace jdl
