#include "gne/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gne {

VectorXd project_box(const VectorXd& y, const VectorXd& lower, const VectorXd& upper) {
  if (y.size() != lower.size() || y.size() != upper.size()) {
    throw DimensionMismatch("project_box: size mismatch");
  }
  if ((lower.array() > upper.array()).any()) {
    throw InvalidBox("project_box: lower exceeds upper");
  }
  return y.cwiseMax(lower).cwiseMin(upper);
}

VectorXd project_nonneg(const VectorXd& y) { return y.cwiseMax(0.0); }

VectorXd project_box_halfspace(const VectorXd& y, const VectorXd& lower,
                               const VectorXd& upper, const VectorXd& a, double b_hs,
                               double tol) {
  if (y.size() != a.size()) throw DimensionMismatch("project_box_halfspace: size mismatch");
  const VectorXd clamped = project_box(y, lower, upper);
  if (a.dot(clamped) <= b_hs) return clamped;

  // Box minimum of a'x decides feasibility of the intersection.
  double box_min = 0.0;
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    box_min += std::min(a[j] * lower[j], a[j] * upper[j]);
  }
  if (box_min > b_hs) {
    throw InfeasibleSet("project_box_halfspace: halfspace excludes the whole box");
  }

  const auto value_at = [&](double mu) {
    return a.dot((y - mu * a).cwiseMax(lower).cwiseMin(upper)) - b_hs;
  };

  double lo = 0.0;
  double hi = 1.0;
  int expand = 0;
  while (value_at(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++expand > 200) {
      throw ProjectionFailure("project_box_halfspace: bracket expansion failed");
    }
  }
  const double width_target = tol * (1.0 + y.norm());
  while (hi - lo > width_target) {
    const double mid = 0.5 * (lo + hi);
    if (value_at(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  // The narrow bracket pins the clamp pattern, where a'x(mu) is linear in mu;
  // Newton steps on that piecewise-linear section land on the root to the
  // evaluation noise of a'x itself, far below the bracket width.
  for (int pass = 0; pass < 3; ++pass) {
    const VectorXd raw = y - hi * a;
    double slope = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      if (raw[j] > lower[j] && raw[j] < upper[j]) slope += a[j] * a[j];
    }
    if (slope <= 0.0) break;
    const double next = hi + value_at(hi) / slope;
    if (!(next >= 0.0) || next == hi) break;
    hi = next;
  }
  return (y - hi * a).cwiseMax(lower).cwiseMin(upper);
}

VectorXd project_polyhedron(const VectorXd& y, const Polyhedron& poly, double tol,
                            int max_iter) {
  const auto rows = poly.rows_a.rows();
  if (poly.rows_a.cols() != y.size() || poly.rows_b.size() != rows) {
    throw DimensionMismatch("project_polyhedron: size mismatch");
  }
  if (rows == 0) return y;

  VectorXd x = y;
  MatrixXd corrections = MatrixXd::Zero(rows, y.size());
  VectorXd row_sq(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    row_sq[r] = poly.rows_a.row(r).squaredNorm();
  }

  double best_residual = std::numeric_limits<double>::infinity();
  VectorXd best = x;
  for (int sweep = 0; sweep < max_iter; ++sweep) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (row_sq[r] == 0.0) continue;
      const VectorXd z = x + corrections.row(r).transpose();
      const double gap = poly.rows_a.row(r).dot(z) - poly.rows_b[r];
      VectorXd projected = z;
      if (gap > 0.0) projected -= (gap / row_sq[r]) * poly.rows_a.row(r).transpose();
      corrections.row(r) = (z - projected).transpose();
      x = projected;
    }
    // Certificate: x = y - sum_r mu_r a_r with mu_r >= 0 by construction of the
    // halfspace corrections, so feasibility plus complementarity suffice.
    double feas = 0.0;
    double compl_res = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double slack = poly.rows_b[r] - poly.rows_a.row(r).dot(x);
      feas = std::max(feas, -slack);
      if (row_sq[r] > 0.0) {
        const double mu = corrections.row(r).dot(poly.rows_a.row(r)) / row_sq[r];
        compl_res = std::max(compl_res, std::abs(std::max(0.0, mu) * slack));
      }
    }
    const double stationarity =
        (y - x - corrections.colwise().sum().transpose()).norm();
    const double residual = std::max({feas, compl_res, stationarity});
    if (residual < best_residual) {
      best_residual = residual;
      best = x;
    }
    if (feas <= tol && compl_res <= tol * (1.0 + y.norm()) && stationarity <= tol) {
      return x;
    }
  }
  throw MaxIterExceeded("project_polyhedron: not certified within budget", best,
                        best_residual);
}

VectorXd project_local(const LocalSetDesc& set, const VectorXd& y, double tol) {
  if (const auto* box = std::get_if<Box>(&set)) {
    return project_box(y, box->lower, box->upper);
  }
  if (const auto* bh = std::get_if<BoxHalfspace>(&set)) {
    return project_box_halfspace(y, bh->lower, bh->upper, bh->normal, bh->offset, tol);
  }
  return project_polyhedron(y, std::get<Polyhedron>(set), std::max(tol, 1e-12));
}

}  // namespace gne
