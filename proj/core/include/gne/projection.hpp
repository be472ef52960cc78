// Exact Euclidean projections onto boxes, the nonnegative orthant,
// box-halfspace intersections, and general polyhedra.
#pragma once

#include <Eigen/Dense>

#include "gne/errors.hpp"
#include "gne/game.hpp"

namespace gne {

/// Elementwise clamp onto {lower <= x <= upper}.
/// Throws InvalidBox when lower > upper in any coordinate.
VectorXd project_box(const VectorXd& y, const VectorXd& lower, const VectorXd& upper);

/// Elementwise max(0, y).
VectorXd project_nonneg(const VectorXd& y);

/// Projection onto {lower <= x <= upper, a'x <= b_hs} via scalar dual
/// bisection on mu in x(mu) = clamp(y - mu a). The bracket is widened by
/// doubling and bisected to width tol*(1 + ||y||); the returned point always
/// satisfies the halfspace. Throws InfeasibleSet when no box point does.
VectorXd project_box_halfspace(const VectorXd& y, const VectorXd& lower,
                               const VectorXd& upper, const VectorXd& a, double b_hs,
                               double tol = 1e-12);

/// Dykstra's alternating projection across the polyhedron's halfspaces.
/// Certifies the result through feasibility, nonnegative multipliers, and
/// complementarity; throws MaxIterExceeded (carrying the best iterate and its
/// residual) if certification fails within the budget.
VectorXd project_polyhedron(const VectorXd& y, const Polyhedron& poly,
                            double tol = 1e-10, int max_iter = 10000);

/// Projection onto a local-set descriptor (dispatch over the variant).
VectorXd project_local(const LocalSetDesc& set, const VectorXd& y, double tol = 1e-12);

}  // namespace gne
