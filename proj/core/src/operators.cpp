#include "gne/operators.hpp"

#include <cmath>
#include <string>

#include "gne/projection.hpp"

namespace gne {

namespace {

void check_stacked(const GameInstance& game, const StackedPoint& point, const char* what) {
  const auto nx = static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  const auto nl = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  if (point.x.size() != nx || point.lambda.size() != nl) {
    throw DimensionMismatch(std::string(what) + ": expected x length " + std::to_string(nx) +
                            " and stacked dual length " + std::to_string(nl) + ", got " +
                            std::to_string(point.x.size()) + " and " +
                            std::to_string(point.lambda.size()));
  }
}

VectorXd dual_mean(const GameInstance& game, const VectorXd& lambda) {
  VectorXd mean = VectorXd::Zero(game.coupling_dim);
  for (int i = 0; i < game.n_agents; ++i) {
    mean += lambda.segment(static_cast<Eigen::Index>(i) * game.coupling_dim,
                           game.coupling_dim);
  }
  return mean / game.n_agents;
}

VectorXd summed_offsets(const GameInstance& game) {
  VectorXd c = VectorXd::Zero(game.coupling_dim);
  for (const auto& agent : game.agents) c += agent.coupling_offset;
  return c;
}

}  // namespace

VectorXd apply_T1(const GameInstance& game, const StackedPoint& point) {
  check_stacked(game, point, "apply_T1");
  const int N = game.n_agents;
  const int m = game.coupling_dim;
  VectorXd out(point.x.size() + point.lambda.size());
  out.head(point.x.size()) = pseudo_gradient(game, point.x);
  const VectorXd lbar = dual_mean(game, point.lambda);
  const VectorXd cbar_over_n = summed_offsets(game) / N;
  for (int i = 0; i < N; ++i) {
    out.segment(point.x.size() + static_cast<Eigen::Index>(i) * m, m) =
        point.lambda.segment(static_cast<Eigen::Index>(i) * m, m) - lbar + cbar_over_n;
  }
  return out;
}

VectorXd apply_S(const GameInstance& game, const StackedPoint& point) {
  check_stacked(game, point, "apply_S");
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  VectorXd out(point.x.size() + point.lambda.size());
  const VectorXd lbar = dual_mean(game, point.lambda);
  VectorXd coupling_sum = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    coupling_sum += game.agents[i].coupling_block * game.agent_segment(point.x, i);
  }
  const VectorXd dual_block = -coupling_sum / N;
  for (int i = 0; i < N; ++i) {
    out.segment(static_cast<Eigen::Index>(i) * n, n) =
        game.agents[i].coupling_block.transpose() * lbar;
    out.segment(point.x.size() + static_cast<Eigen::Index>(i) * m, m) = dual_block;
  }
  return out;
}

Preconditioner assemble_preconditioner(const GameInstance& game, const VectorXd& alpha,
                                       const VectorXd& beta, double tau, double nu) {
  if (alpha.size() != game.n_agents || beta.size() != game.n_agents) {
    throw DimensionMismatch("assemble_preconditioner: need one alpha and beta per agent");
  }
  Preconditioner out;
  out.alpha = alpha;
  out.beta = beta;
  out.tau = tau;
  out.nu = nu;
  out.n_agents = game.n_agents;
  out.decision_dim = game.decision_dim;
  out.coupling_dim = game.coupling_dim;
  out.coupling.reserve(game.agents.size());
  for (const auto& agent : game.agents) out.coupling.push_back(agent.coupling_block);
  return out;
}

MatrixXd preconditioner_matrix(const Preconditioner& precond) {
  const int N = precond.n_agents;
  const int n = precond.decision_dim;
  const int m = precond.coupling_dim;
  const auto nx = static_cast<Eigen::Index>(N) * n;
  const auto nl = static_cast<Eigen::Index>(N) * m;
  MatrixXd phi = MatrixXd::Zero(nx + nl, nx + nl);
  for (int i = 0; i < N; ++i) {
    phi.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(i) * n, n, n) =
        (1.0 / precond.alpha[i]) * MatrixXd::Identity(n, n);
    phi.block(nx + static_cast<Eigen::Index>(i) * m, nx + static_cast<Eigen::Index>(i) * m,
              m, m) = (1.0 / precond.beta[i]) * MatrixXd::Identity(m, m);
  }
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      phi.block(static_cast<Eigen::Index>(i) * n, nx + static_cast<Eigen::Index>(j) * m, n,
                m) = -precond.coupling[i].transpose() / N;
      phi.block(nx + static_cast<Eigen::Index>(j) * m, static_cast<Eigen::Index>(i) * n, m,
                n) = -precond.coupling[i] / N;
    }
  }
  return phi;
}

Preconditioner build_preconditioner(const GameInstance& game, const GameConstants& consts,
                                    double tau_margin) {
  if (tau_margin < 0.0) throw InvalidParams("build_preconditioner: tau_margin must be >= 0");
  const double tau = (1.0 + tau_margin) / (2.0 * consts.delta);
  VectorXd alpha(game.n_agents), beta(game.n_agents);
  for (int i = 0; i < game.n_agents; ++i) {
    alpha[i] = 1.0 / (consts.coupling_norms[i] + tau);
    beta[i] = 1.0 / (consts.coupling_norm_avg + tau);
  }
  const double nu = 2.0 * consts.delta * tau / (4.0 * consts.delta * tau - 1.0);
  Preconditioner out = assemble_preconditioner(game, alpha, beta, tau, nu);

  const MatrixXd phi = preconditioner_matrix(out);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(phi, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) {
    throw PDCheckFailed("build_preconditioner: eigenvalue computation failed");
  }
  const double lam_min = eig.eigenvalues().minCoeff();
  if (lam_min < tau - 1e-9) {
    throw PDCheckFailed("build_preconditioner: smallest eigenvalue " +
                        std::to_string(lam_min) + " below tau " + std::to_string(tau));
  }
  return out;
}

VectorXd phi_apply(const Preconditioner& precond, const VectorXd& v) {
  const int N = precond.n_agents;
  const int n = precond.decision_dim;
  const int m = precond.coupling_dim;
  const auto nx = static_cast<Eigen::Index>(N) * n;
  const auto nl = static_cast<Eigen::Index>(N) * m;
  if (v.size() != nx + nl) {
    throw DimensionMismatch("phi_apply: expected length " + std::to_string(nx + nl) +
                            ", got " + std::to_string(v.size()));
  }
  VectorXd out(v.size());
  VectorXd vl_mean = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    vl_mean += v.segment(nx + static_cast<Eigen::Index>(i) * m, m);
  }
  vl_mean /= N;
  VectorXd cvx_sum = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    cvx_sum += precond.coupling[i] * v.segment(static_cast<Eigen::Index>(i) * n, n);
  }
  for (int i = 0; i < N; ++i) {
    out.segment(static_cast<Eigen::Index>(i) * n, n) =
        v.segment(static_cast<Eigen::Index>(i) * n, n) / precond.alpha[i] -
        precond.coupling[i].transpose() * vl_mean;
    out.segment(nx + static_cast<Eigen::Index>(i) * m, m) =
        v.segment(nx + static_cast<Eigen::Index>(i) * m, m) / precond.beta[i] -
        cvx_sum / N;
  }
  return out;
}

double phi_norm(const Preconditioner& precond, const VectorXd& v) {
  const double quad = v.dot(phi_apply(precond, v));
  if (quad < -1e-9 * (1.0 + v.squaredNorm())) {
    throw PDCheckFailed("phi_norm: negative quadratic form " + std::to_string(quad));
  }
  return std::sqrt(std::max(0.0, quad));
}

StackedPoint pfb_map(const GameInstance& game, const Preconditioner& precond,
                     const StackedPoint& point) {
  check_stacked(game, point, "pfb_map");
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  const VectorXd grad = pseudo_gradient(game, point.x);
  const VectorXd lbar = dual_mean(game, point.lambda);

  StackedPoint next;
  next.x.resize(point.x.size());
  next.lambda.resize(point.lambda.size());
  VectorXd d_sum = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    const VectorXd xi = game.agent_segment(point.x, i);
    const VectorXd step = xi - precond.alpha[i] * (grad.segment(static_cast<Eigen::Index>(i) * n, n) +
                                                   game.agents[i].coupling_block.transpose() * lbar);
    const VectorXd xt = project_local(game.agents[i].local_set, step);
    next.x.segment(static_cast<Eigen::Index>(i) * n, n) = xt;
    d_sum += 2.0 * (game.agents[i].coupling_block * xt) -
             game.agents[i].coupling_block * xi - game.agents[i].coupling_offset;
  }
  const VectorXd d_mean = d_sum / N;
  for (int i = 0; i < N; ++i) {
    const VectorXd li = point.lambda.segment(static_cast<Eigen::Index>(i) * m, m);
    next.lambda.segment(static_cast<Eigen::Index>(i) * m, m) =
        project_nonneg(li + precond.beta[i] * (d_mean - li + lbar));
  }
  return next;
}

double kkt_residual(const GameInstance& game, const VectorXd& x,
                    const VectorXd& lambda_shared) {
  if (lambda_shared.size() != game.coupling_dim) {
    throw DimensionMismatch("kkt_residual: expected shared dual length " +
                            std::to_string(game.coupling_dim) + ", got " +
                            std::to_string(lambda_shared.size()));
  }
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const VectorXd grad = pseudo_gradient(game, x);
  double primal_gap = 0.0;
  for (int i = 0; i < N; ++i) {
    const VectorXd xi = game.agent_segment(x, i);
    const VectorXd step = xi - (grad.segment(static_cast<Eigen::Index>(i) * n, n) +
                                game.agents[i].coupling_block.transpose() * lambda_shared);
    const VectorXd proj = project_local(game.agents[i].local_set, step);
    primal_gap = std::max(primal_gap, (xi - proj).cwiseAbs().maxCoeff());
  }
  const VectorXd slack = coupling_violation(game, x);
  const VectorXd dual_proj = project_nonneg(lambda_shared + slack);
  const double dual_gap = (lambda_shared - dual_proj).cwiseAbs().maxCoeff();
  return std::max(primal_gap, dual_gap);
}

}  // namespace gne
