// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The jdlearn authors

#include "jdlearn/qpsolver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <cstdio>
#include <stdexcept>
#include <vector>

namespace jdl::qp {

namespace {

using SparseColMatrix = Eigen::SparseMatrix<double>;

double objective_value(const QuadraticProgram& p, const Vector& h) {
  return p.linear.dot(h) + 0.5 * h.dot(p.hess_diag.cwiseProduct(h));
}

bool has_ball(const QuadraticProgram& p) { return p.pos_a.size() > 0; }

bool unit_bounds(const QuadraticProgram& p) {
  return (p.pos_a.array() == -1.0).all() && (p.pos_b.array() == 1.0).all();
}

void validate(const QuadraticProgram& p) {
  const Index m = p.dimension();
  if (p.hess_diag.size() != m) {
    throw std::invalid_argument("qp: hess_diag size mismatch");
  }
  if ((p.hess_diag.array() <= 0.0).any()) {
    throw std::invalid_argument("qp: hess_diag must be positive elementwise");
  }
  if (p.eq_rows.rows() > 0 && p.eq_rows.cols() != m) {
    throw std::invalid_argument("qp: eq_rows column count mismatch");
  }
  if (has_ball(p)) {
    if (p.pos_a.size() != m || p.pos_b.size() != m) {
      throw std::invalid_argument("qp: bound vector size mismatch");
    }
    if ((p.pos_a.array() > 0.0).any() || (p.pos_b.array() < 0.0).any()) {
      throw std::invalid_argument("qp: bounds must satisfy a <= 0 <= b");
    }
    if (p.prior < 0.0) throw std::invalid_argument("qp: prior must be nonnegative");
  }
}

// Exact Euclidean projection onto { z : |z|_1 <= radius }.
Vector project_l1(const Vector& v, double radius) {
  if (v.cwiseAbs().sum() <= radius) return v;
  if (radius <= 0.0) return Vector::Zero(v.size());
  std::vector<double> mag(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(v(i));
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    cumsum += mag[k];
    const double cand = (cumsum - radius) / static_cast<double>(k + 1);
    if (k + 1 == mag.size() || mag[k + 1] <= cand) {
      theta = cand;
      break;
    }
  }
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double s = std::abs(v(i)) - theta;
    out(i) = s > 0.0 ? (v(i) > 0.0 ? s : -s) : 0.0;
  }
  return out;
}

// Projection onto { z : sum_i (-a_i) z_i^+ + b_i z_i^- <= radius } for
// general a <= 0 <= b, by bisection on the shrinkage multiplier.
Vector project_weighted(const Vector& v, const Vector& a, const Vector& b,
                        double radius) {
  auto shrink = [&](double theta, Vector& z) {
    double value = 0.0;
    for (Index i = 0; i < v.size(); ++i) {
      const double wp = -a(i);
      const double wm = b(i);
      if (v(i) > 0.0) {
        z(i) = wp > 0.0 ? std::max(v(i) - theta * wp, 0.0) : v(i);
        value += wp * z(i);
      } else if (v(i) < 0.0) {
        z(i) = wm > 0.0 ? std::min(v(i) + theta * wm, 0.0) : v(i);
        value += -wm * z(i);
      } else {
        z(i) = 0.0;
      }
    }
    return value;
  };
  Vector z(v.size());
  if (shrink(0.0, z) <= radius) return z;
  double lo = 0.0;
  double hi = 1.0;
  while (shrink(hi, z) > radius && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (shrink(mid, z) > radius) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  shrink(hi, z);
  return z;
}

Vector project_ball(const QuadraticProgram& p, const Vector& v) {
  if (unit_bounds(p)) return project_l1(v, p.prior);
  return project_weighted(v, p.pos_a, p.pos_b, p.prior);
}

// Dense r x r Schur matrix S = G diag(w) G' from a column-major sparse G.
Matrix schur_matrix(const SparseColMatrix& g_cols, const Vector& w) {
  const Index r = g_cols.rows();
  Matrix s = Matrix::Zero(r, r);
  std::vector<std::pair<Index, double>> entries;
  for (Index col = 0; col < g_cols.outerSize(); ++col) {
    entries.clear();
    for (SparseColMatrix::InnerIterator it(g_cols, col); it; ++it) {
      entries.emplace_back(it.row(), it.value());
    }
    for (const auto& [ri, vi] : entries) {
      for (const auto& [rj, vj] : entries) {
        s(ri, rj) += w(col) * vi * vj;
      }
    }
  }
  return s;
}

// Eigenvalue-thresholded pseudo-inverse of the PSD Schur matrix.
class SchurPinv {
 public:
  SchurPinv() = default;
  SchurPinv(const SparseColMatrix& g_cols, const Vector& w, double rel_threshold) {
    numerics::EigenDecomposition ed = numerics::sym_eigen(schur_matrix(g_cols, w));
    const double cutoff = rel_threshold * std::max(ed.values.maxCoeff(), 0.0);
    inv_values_ = ed.values.unaryExpr(
        [cutoff](double v) { return v > cutoff && v > 0.0 ? 1.0 / v : 0.0; });
    vectors_ = std::move(ed.vectors);
  }

  Vector apply(const Vector& y) const {
    return vectors_ * inv_values_.cwiseProduct(vectors_.transpose() * y);
  }

 private:
  Matrix vectors_;
  Vector inv_values_;
};

// Jittered Cholesky solve of the same Schur system. The rank deficiency of
// S = G W G' sits in null(G'), where multiplier components do not move the
// primal update, so a tiny diagonal shift is equivalent to the
// pseudo-inverse for that purpose and an order of magnitude cheaper.
class SchurChol {
 public:
  SchurChol() = default;
  SchurChol(const SparseColMatrix& g_cols, const Vector& w) {
    Matrix s = schur_matrix(g_cols, w);
    const double jitter =
        1e-12 * std::max(s.diagonal().maxCoeff(), 1e-300) + 1e-300;
    s.diagonal().array() += jitter;
    llt_.compute(s);
    ok_ = llt_.info() == Eigen::Success;
  }

  bool ok() const { return ok_; }
  Vector apply(const Vector& y) const { return llt_.solve(y); }

 private:
  Eigen::LLT<Matrix> llt_;
  bool ok_ = false;
};

double residual_scale(const QuadraticProgram& p, const Vector& h) {
  double s = 1.0;
  if (p.linear.size() > 0) s = std::max(s, p.linear.cwiseAbs().maxCoeff());
  if (h.size() > 0) s = std::max(s, p.hess_diag.cwiseProduct(h).cwiseAbs().maxCoeff());
  return s;
}

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double compl_res = 0.0;
};

// Stationarity/feasibility/complementarity at h. Multipliers are taken as
// given when supplied, otherwise estimated by least squares over the
// support of h. Entries below the support threshold count as zero and are
// checked against the subgradient interval.
KktReport kkt_report(const QuadraticProgram& p, const SparseColMatrix& g_cols,
                     const Vector& h, const Vector* nu_in, const double* theta_in) {
  const Index m = p.dimension();
  const Index r = g_cols.rows();
  const bool ball = has_ball(p);
  const Vector grad = p.hess_diag.cwiseProduct(h) + p.linear;
  const double support_tau =
      1e-9 * std::max(1.0, h.size() > 0 ? h.cwiseAbs().maxCoeff() : 0.0);

  Vector c = Vector::Zero(m);
  if (ball) {
    for (Index i = 0; i < m; ++i) {
      if (h(i) > support_tau) {
        c(i) = -p.pos_a(i);
      } else if (h(i) < -support_tau) {
        c(i) = -p.pos_b(i);
      }
    }
  }

  Vector nu = Vector::Zero(r);
  double theta = 0.0;
  if (nu_in && theta_in) {
    nu = *nu_in;
    theta = std::max(0.0, *theta_in);
  } else {
    const Index cols = r + (ball ? 1 : 0);
    if (cols > 0) {
      Matrix ata = Matrix::Zero(cols, cols);
      Vector atb = Vector::Zero(cols);
      if (r > 0) {
        ata.topLeftCorner(r, r) = schur_matrix(g_cols, Vector::Ones(m));
        atb.head(r) = g_cols * grad;
        if (ball) {
          const Vector gc = g_cols * c;
          ata.topRightCorner(r, 1) = gc;
          ata.bottomLeftCorner(1, r) = gc.transpose();
        }
      }
      if (ball) {
        ata(cols - 1, cols - 1) = c.squaredNorm();
        atb(cols - 1) = c.dot(grad);
      }
      const Vector sol = ata.completeOrthogonalDecomposition().solve(-atb);
      if (r > 0) nu = sol.head(r);
      if (ball) theta = std::max(0.0, sol(cols - 1));
    }
  }

  Vector station = grad;
  if (r > 0) station += g_cols.transpose() * nu;
  double stat_res = 0.0;
  for (Index i = 0; i < m; ++i) {
    double v;
    if (!ball) {
      v = std::abs(station(i));
    } else if (c(i) != 0.0) {
      v = std::abs(station(i) + theta * c(i));
    } else {
      // subgradient interval [theta a_i, theta b_i] must contain -station
      v = std::max({0.0, station(i) - theta * p.pos_b(i),
                    theta * p.pos_a(i) - station(i)});
    }
    stat_res = std::max(stat_res, v);
  }

  KktReport rep;
  rep.stationarity = stat_res;
  double primal = 0.0;
  if (r > 0) primal = (g_cols * h).cwiseAbs().maxCoeff();
  if (ball) {
    const double slack = p.prior - certificate_value(h, p.pos_a, p.pos_b);
    primal = std::max(primal, std::max(0.0, -slack));
    rep.compl_res = std::abs(theta * std::max(slack, 0.0));
  }
  rep.primal = primal;
  return rep;
}

void finalize_split(const QuadraticProgram& p, QpSolution& sol) {
  sol.h_plus = sol.h.cwiseMax(0.0);
  sol.h_minus = (-sol.h).cwiseMax(0.0);
  sol.objective = objective_value(p, sol.h);
}

}  // namespace

double certificate_value(const Vector& h, const Vector& a, const Vector& b) {
  double v = 0.0;
  for (Index i = 0; i < h.size(); ++i) {
    v += h(i) >= 0.0 ? -a(i) * h(i) : -b(i) * h(i);
  }
  return v;
}

QpSolution solve_equality_only(const QuadraticProgram& p, double tol) {
  validate(p);
  const Index r = p.num_eq_rows();
  QpSolution sol;
  const Vector winv = p.hess_diag.cwiseInverse();
  if (r == 0) {
    sol.h = -p.linear.cwiseProduct(winv);
  } else {
    const SparseColMatrix g_cols = p.eq_rows;
    SchurPinv pinv(g_cols, winv, 1e-10);
    const Vector rhs = g_cols * p.linear.cwiseProduct(winv);
    const Vector nu = -pinv.apply(rhs);
    sol.h = -winv.cwiseProduct(p.linear + g_cols.transpose() * nu);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector res = g_cols * sol.h;
      const double scale = std::max(1.0, sol.h.cwiseAbs().maxCoeff());
      if (res.cwiseAbs().maxCoeff() <= 1e-13 * scale) break;
      const Vector dnu = pinv.apply(res);
      sol.h -= winv.cwiseProduct(g_cols.transpose() * dnu);
    }
    sol.primal_residual = (g_cols * sol.h).cwiseAbs().maxCoeff();
  }
  sol.status = Status::optimal;
  finalize_split(p, sol);
  (void)tol;
  return sol;
}

QpSolution solve(const QuadraticProgram& p, double tol, int max_iter) {
  SolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve(p, opts);
}

QpSolution solve(const QuadraticProgram& p, const SolveOptions& opts) {
  validate(p);
  const Index m = p.dimension();
  const Index r = p.num_eq_rows();

  if (!has_ball(p)) return solve_equality_only(p, opts.tol);
  const SparseColMatrix g_cols =
      r > 0 ? SparseColMatrix(p.eq_rows) : SparseColMatrix(0, m);

  // When the ball is slack at the equality-only optimum that solve is the
  // answer. A cheap Cholesky-based probe decides whether the exact
  // pseudo-inverse route is worth computing.
  {
    const Vector winv = p.hess_diag.cwiseInverse();
    Vector h_eq;
    bool reliable = true;
    if (r == 0) {
      h_eq = -p.linear.cwiseProduct(winv);
    } else {
      SchurChol chol(g_cols, winv);
      if (chol.ok()) {
        const Vector nu = -chol.apply(g_cols * p.linear.cwiseProduct(winv));
        h_eq = -winv.cwiseProduct(p.linear + g_cols.transpose() * nu);
        for (int pass = 0; pass < 2; ++pass) {
          const Vector res = g_cols * h_eq;
          if (res.cwiseAbs().maxCoeff() <=
              1e-11 * std::max(1.0, h_eq.cwiseAbs().maxCoeff())) {
            break;
          }
          h_eq -= winv.cwiseProduct(g_cols.transpose() * chol.apply(res));
        }
        reliable = (g_cols * h_eq).cwiseAbs().maxCoeff() <=
                   1e-8 * std::max(1.0, h_eq.cwiseAbs().maxCoeff());
      } else {
        reliable = false;
      }
    }
    if (!reliable) h_eq = solve_equality_only(p, opts.tol).h;
    if (certificate_value(h_eq, p.pos_a, p.pos_b) <=
        p.prior * (1.0 + 1e-12) + 1e-14) {
      QpSolution eq = solve_equality_only(p, opts.tol);
      const KktReport rep = kkt_report(p, g_cols, eq.h, nullptr, nullptr);
      eq.primal_residual = rep.primal;
      eq.dual_residual = rep.stationarity;
      eq.compl_residual = rep.compl_res;
      return eq;
    }
  }

  double rho = opts.rho;
  Vector w = (p.hess_diag.array() + rho).inverse();
  SchurChol pinv;
  if (r > 0) pinv = SchurChol(g_cols, w);

  Vector x = Vector::Zero(m), z = Vector::Zero(m), u = Vector::Zero(m);
  double best_merit = std::numeric_limits<double>::infinity();
  QpSolution sol;
  sol.status = Status::max_iter;

  const bool diag = std::getenv("JDLEARN_QP_DIAG") != nullptr;

  // Exact re-solve on the active face guessed from the consensus iterate:
  // h_A = -D_A^{-1}(alpha_A + Gamma_A' nu + c_A theta) substituted into the
  // equality rows and the face row gives an (r+1)-dimensional Schur system.
  auto try_polish = [&](const Vector& zc, QpSolution& out) -> bool {
    const double tau = 1e-12 * std::max(1.0, zc.cwiseAbs().maxCoeff());
    Vector wsel = Vector::Zero(m);
    Vector c = Vector::Zero(m);
    Index na = 0;
    for (Index i = 0; i < m; ++i) {
      if (std::abs(zc(i)) > tau) {
        wsel(i) = 1.0 / p.hess_diag(i);
        c(i) = zc(i) > 0.0 ? -p.pos_a(i) : -p.pos_b(i);
        ++na;
      }
    }
    if (na == 0) return false;

    SparseColMatrix ext(r + 1, m);
    {
      std::vector<Eigen::Triplet<double>> trip;
      trip.reserve(static_cast<std::size_t>(g_cols.nonZeros() + na));
      for (Index col = 0; col < g_cols.outerSize(); ++col) {
        for (SparseColMatrix::InnerIterator it(g_cols, col); it; ++it) {
          trip.emplace_back(it.row(), col, it.value());
        }
      }
      for (Index i = 0; i < m; ++i) {
        if (c(i) != 0.0) trip.emplace_back(r, i, c(i));
      }
      ext.setFromTriplets(trip.begin(), trip.end());
    }
    Vector target = Vector::Zero(r + 1);
    target(r) = p.prior;

    SchurPinv face_pinv(ext, wsel, 1e-13);
    Vector mult = -face_pinv.apply(ext * wsel.cwiseProduct(p.linear) + target);
    Vector h = -wsel.cwiseProduct(p.linear + ext.transpose() * mult);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector res = ext * h - target;
      if (res.cwiseAbs().maxCoeff() <= 1e-13 * std::max(1.0, p.prior)) break;
      mult -= face_pinv.apply(res);
      h = -wsel.cwiseProduct(p.linear + ext.transpose() * mult);
    }

    Vector nu = mult.head(r);
    double theta = mult(r);
    if (theta < -1e-9) {
      if (diag) std::fprintf(stderr, "  polish reject: theta=%g\n", theta);
      return false;
    }
    for (Index i = 0; i < m; ++i) {
      if (c(i) != 0.0 && (zc(i) > 0.0 ? h(i) < -1e-10 : h(i) > 1e-10)) {
        if (diag) std::fprintf(stderr, "  polish reject: sign flip i=%ld h=%g\n", (long)i, h(i));
        return false;
      }
    }
    theta = std::max(theta, 0.0);
    const KktReport rep = kkt_report(p, g_cols, h, &nu, &theta);
    const double scale = residual_scale(p, h);
    if (rep.stationarity > opts.tol * scale || rep.primal > opts.tol * scale) {
      if (diag) std::fprintf(stderr, "  polish reject: na=%ld stat=%g primal=%g scale=%g\n", (long)na, rep.stationarity, rep.primal, scale);
      return false;
    }
    out.h = std::move(h);
    out.primal_residual = rep.primal;
    out.dual_residual = rep.stationarity;
    out.compl_residual = rep.compl_res;
    out.status = Status::optimal;
    finalize_split(p, out);
    return true;
  };

  int iter = 0;
  int since_rescale = 0;
  int rescales = 0;
  int polish_attempts = 0;
  Index next_polish = 0;
  for (iter = 1; iter <= opts.max_iter; ++iter) {
    const Vector v = rho * (z - u) - p.linear;
    const Vector x0 = w.cwiseProduct(v);
    if (r > 0) {
      const Vector nu = pinv.apply(g_cols * x0);
      x = x0 - w.cwiseProduct(g_cols.transpose() * nu);
    } else {
      x = x0;
    }
    const Vector zprev = z;
    z = project_ball(p, x + u);
    u += x - z;

    const double rp = (x - z).cwiseAbs().maxCoeff();
    const double rd = rho * (z - zprev).cwiseAbs().maxCoeff();
    const double merit = std::max(rp, rd);
    if (merit < best_merit) best_merit = merit;
    if (opts.record_merit) {
      assert(sol.merit_trace.empty() || best_merit <= sol.merit_trace.back());
      sol.merit_trace.push_back(best_merit);
    }

    const double zscale = std::max(1.0, z.cwiseAbs().maxCoeff());
    const bool near = rp <= 1e-4 * zscale && rd <= 1e-4 * zscale;
    if ((near && iter >= next_polish) || iter % 500 == 0) {
      ++polish_attempts;
      if (try_polish(z, sol)) {
        sol.iterations = iter;
        if (diag) std::fprintf(stderr, "qp: iters=%d rescales=%d polishes=%d (ok)\n", iter, rescales, polish_attempts);
        return sol;
      }
      next_polish = iter + 250;
    }
    if (rp <= 1e-10 * zscale && rd <= 1e-10 * zscale) break;

    if (++since_rescale >= 50) {
      since_rescale = 0;
      bool changed = false;
      if (rp > 10.0 * rd && rho < 1e6) {
        rho *= 2.0;
        u /= 2.0;
        changed = true;
      } else if (rd > 10.0 * rp && rho > 1e-4) {
        rho /= 2.0;
        u *= 2.0;
        changed = true;
      }
      if (changed) {
        ++rescales;
        w = (p.hess_diag.array() + rho).inverse();
        if (r > 0) pinv = SchurChol(g_cols, w);
      }
    }
  }

  if (diag) std::fprintf(stderr, "qp: iters=%d rescales=%d polishes=%d (fallback)\n", iter, rescales, polish_attempts);
  // Feasibility-exact fallback from the consensus iterate: orthogonal
  // projection onto the equality subspace, then a radial pull into the
  // ball (scaling preserves the subspace).
  Vector h = z;
  if (r > 0) {
    SchurPinv proj(g_cols, Vector::Ones(m), 1e-12);
    for (int pass = 0; pass < 2; ++pass) {
      h -= g_cols.transpose() * proj.apply(g_cols * h);
    }
  }
  const double val = certificate_value(h, p.pos_a, p.pos_b);
  if (val > p.prior && val > 0.0) h *= p.prior / val;

  sol.h = std::move(h);
  const KktReport rep = kkt_report(p, g_cols, sol.h, nullptr, nullptr);
  sol.primal_residual = rep.primal;
  sol.dual_residual = rep.stationarity;
  sol.compl_residual = rep.compl_res;
  sol.iterations = std::min(iter, opts.max_iter);
  const double scale = residual_scale(p, sol.h);
  sol.status = (rep.stationarity <= opts.tol * scale && rep.primal <= opts.tol * scale)
                   ? Status::optimal
                   : Status::max_iter;
  finalize_split(p, sol);
  return sol;
}

}  // namespace jdl::qp
