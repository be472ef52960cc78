// Operator-theoretic layer: the monotone splitting pieces, the preconditioner,
// the projected forward-backward map, and the KKT residual.
#pragma once

#include <Eigen/Dense>

#include "gne/errors.hpp"
#include "gne/game.hpp"

namespace gne {

/// Stacked primal-dual point. The dual is either shared (length m) or
/// per-agent stacked (length m*N); operations state which form they expect.
struct StackedPoint {
  VectorXd x;
  VectorXd lambda;
};

/// Step-size blocks and the induced metric for the preconditioned splitting.
/// alpha/beta are per-agent; the full matrix couples primal and dual blocks
/// through (1/N) copies of each agent's coupling block.
struct Preconditioner {
  VectorXd alpha;
  VectorXd beta;
  std::vector<MatrixXd> coupling;  // per-agent C_i
  double tau = 0.0;
  double nu = 0.0;
  int n_agents = 0;
  int decision_dim = 0;
  int coupling_dim = 0;
};

/// Forward (single-valued) part at omega = col(x, lambda), stacked dual:
/// col(F(x), lambda_i - mean(lambda) + cbar/N) with cbar the summed offsets.
VectorXd apply_T1(const GameInstance& game, const StackedPoint& point);

/// Skew-symmetric coupling part: col over agents of C_i' * mean(lambda) in the
/// primal block and -(1/N) * sum_j C_j x_j repeated in the dual block.
VectorXd apply_S(const GameInstance& game, const StackedPoint& point);

/// Assembles alpha_i = (||C_i|| + tau)^-1, beta_i = (avg_j ||C_j|| + tau)^-1
/// with tau = (1 + tau_margin)/(2 delta), and validates numerically that the
/// assembled matrix has smallest eigenvalue >= tau. Throws PDCheckFailed.
Preconditioner build_preconditioner(const GameInstance& game, const GameConstants& consts,
                                    double tau_margin);

/// Assembles the same structure from given step sizes without the eigenvalue
/// validation; used by solvers whose plan was already validated.
Preconditioner assemble_preconditioner(const GameInstance& game, const VectorXd& alpha,
                                       const VectorXd& beta, double tau, double nu);

/// Dense preconditioner matrix, ordered (x blocks, lambda blocks).
MatrixXd preconditioner_matrix(const Preconditioner& precond);

/// Matrix-free application of the preconditioner to col(v_x, v_lambda).
VectorXd phi_apply(const Preconditioner& precond, const VectorXd& v);

/// Induced norm sqrt(v' Phi v). Throws PDCheckFailed when the quadratic form
/// comes out negative beyond roundoff.
double phi_norm(const Preconditioner& precond, const VectorXd& v);

/// One projected forward-backward step at a stacked-dual point, evaluated in
/// closed form: primal projected pseudo-gradient step against the dual mean,
/// then a projected dual step against the reflected average violation.
StackedPoint pfb_map(const GameInstance& game, const Preconditioner& precond,
                     const StackedPoint& point);

/// Natural residual of the coupled KKT system at (x, shared lambda): the max
/// infinity-norm of the projected primal and dual fixed-point gaps.
double kkt_residual(const GameInstance& game, const VectorXd& x,
                    const VectorXd& lambda_shared);

}  // namespace gne
