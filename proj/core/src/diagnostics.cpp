#include "gne/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "gne/projection.hpp"

namespace gne {

namespace {

VectorXd block_mean(const VectorXd& v, int block, int count) {
  VectorXd mean = VectorXd::Zero(block);
  for (int i = 0; i < count; ++i) mean += v.segment(static_cast<Eigen::Index>(i) * block, block);
  return mean / count;
}

VectorXd repeat_blocks(const VectorXd& block, int count) {
  VectorXd out(block.size() * count);
  for (int i = 0; i < count; ++i) out.segment(i * block.size(), block.size()) = block;
  return out;
}

double box_norm_sq(const VectorXd& lower, const VectorXd& upper) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    total += std::max(lower[j] * lower[j], upper[j] * upper[j]);
  }
  return total;
}

}  // namespace

InvarianceGaps tracking_invariance(const GameInstance& game, const IterateState& state) {
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  const auto dual_len = static_cast<Eigen::Index>(N) * m;
  if (state.sigma.size() != state.x.size() || state.y.size() != dual_len ||
      state.z.size() != dual_len) {
    throw DimensionMismatch("tracking_invariance: state lacks tracking fields");
  }
  InvarianceGaps gaps;
  gaps.sigma_gap = (block_mean(state.sigma, n, N) - block_mean(state.x, n, N)).norm();
  gaps.z_gap = (block_mean(state.z, m, N) - block_mean(state.lambda, m, N)).norm();
  VectorXd d_prev = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    d_prev += 2.0 * (game.agents[i].coupling_block *
                     state.x_tilde_prev.segment(static_cast<Eigen::Index>(i) * n, n)) -
              game.agents[i].coupling_block * game.agent_segment(state.x_prev, i) -
              game.agents[i].coupling_offset;
  }
  gaps.y_gap = (block_mean(state.y, m, N) - d_prev / N).norm();
  return gaps;
}

double shadow_error(const GameInstance& game, const StepPlan& plan,
                    const IterateState& state, const MatrixXd& mixing,
                    const std::optional<double>& dual_cap) {
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  auto clamp_dual = [&dual_cap](const VectorXd& v) {
    return dual_cap ? v.cwiseMax(0.0).cwiseMin(*dual_cap).eval() : v.cwiseMax(0.0).eval();
  };

  VectorXd sigma_hat = VectorXd::Zero(state.sigma.size());
  VectorXd y_hat = VectorXd::Zero(state.y.size());
  VectorXd z_hat = VectorXd::Zero(state.z.size());
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      sigma_hat.segment(static_cast<Eigen::Index>(i) * n, n) +=
          mixing(i, j) * state.sigma.segment(static_cast<Eigen::Index>(j) * n, n);
      y_hat.segment(static_cast<Eigen::Index>(i) * m, m) +=
          mixing(i, j) * state.y.segment(static_cast<Eigen::Index>(j) * m, m);
      z_hat.segment(static_cast<Eigen::Index>(i) * m, m) +=
          mixing(i, j) * state.z.segment(static_cast<Eigen::Index>(j) * m, m);
    }
  }

  const VectorXd grad = extended_pseudo_gradient(game, state.x, sigma_hat);
  VectorXd x_tilde(state.x.size());
  VectorXd d_sum = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) {
    const VectorXd xi = game.agent_segment(state.x, i);
    const VectorXd step =
        xi - plan.alpha[i] * (grad.segment(static_cast<Eigen::Index>(i) * n, n) +
                              game.agents[i].coupling_block.transpose() *
                                  z_hat.segment(static_cast<Eigen::Index>(i) * m, m));
    const VectorXd xt = project_local(game.agents[i].local_set, step);
    x_tilde.segment(static_cast<Eigen::Index>(i) * n, n) = xt;
    d_sum += 2.0 * (game.agents[i].coupling_block * xt) -
             game.agents[i].coupling_block * xi - game.agents[i].coupling_offset;
  }
  const VectorXd d_mean = d_sum / N;

  VectorXd lambda_tilde(state.lambda.size());
  for (int i = 0; i < N; ++i) {
    const auto seg = static_cast<Eigen::Index>(i) * m;
    const VectorXd y_plus =
        y_hat.segment(seg, m) +
        game.agents[i].coupling_block *
            (2.0 * x_tilde.segment(static_cast<Eigen::Index>(i) * n, n) -
             game.agent_segment(state.x, i)) -
        game.agents[i].coupling_block *
            (2.0 * state.x_tilde_prev.segment(static_cast<Eigen::Index>(i) * n, n) -
             game.agent_segment(state.x_prev, i));
    lambda_tilde.segment(seg, m) = clamp_dual(
        state.lambda.segment(seg, m) +
        plan.beta[i] * (y_plus - state.lambda.segment(seg, m) + z_hat.segment(seg, m)));
  }

  const VectorXd xbar = block_mean(state.x, n, N);
  const VectorXd lbar = block_mean(state.lambda, m, N);
  const VectorXd grad_exact = extended_pseudo_gradient(game, state.x, repeat_blocks(xbar, N));
  VectorXd x_tilde_exact(state.x.size());
  for (int i = 0; i < N; ++i) {
    const VectorXd xi = game.agent_segment(state.x, i);
    const VectorXd step =
        xi - plan.alpha[i] * (grad_exact.segment(static_cast<Eigen::Index>(i) * n, n) +
                              game.agents[i].coupling_block.transpose() * lbar);
    x_tilde_exact.segment(static_cast<Eigen::Index>(i) * n, n) =
        project_local(game.agents[i].local_set, step);
  }
  VectorXd lambda_tilde_exact(state.lambda.size());
  for (int i = 0; i < N; ++i) {
    const auto seg = static_cast<Eigen::Index>(i) * m;
    lambda_tilde_exact.segment(seg, m) = clamp_dual(
        state.lambda.segment(seg, m) +
        plan.beta[i] * (d_mean - state.lambda.segment(seg, m) + lbar));
  }
  return std::sqrt((x_tilde - x_tilde_exact).squaredNorm() +
                   (lambda_tilde - lambda_tilde_exact).squaredNorm());
}

double stacked_omega_bound(const GameInstance& game) {
  double total = 0.0;
  for (const auto& agent : game.agents) {
    if (const auto* box = std::get_if<Box>(&agent.local_set)) {
      total += box_norm_sq(box->lower, box->upper);
    } else if (const auto* bh = std::get_if<BoxHalfspace>(&agent.local_set)) {
      total += box_norm_sq(bh->lower, bh->upper);
    } else {
      throw NotSupported("stacked_omega_bound: polyhedral local set has no box bound");
    }
  }
  return std::sqrt(total);
}

BoundInputs assemble_bound_inputs(const GameInstance& game, const GameConstants& consts,
                                  const StepPlan& plan, const DecayCertificate& cert,
                                  const RunTrace& trace) {
  BoundInputs inputs;
  inputs.theta = cert.theta;
  inputs.rho = cert.rho;
  inputs.gamma = plan.gamma;

  double max_step = 0.0;
  double max_dual = 0.0;
  for (const TraceRow& row : trace.rows) {
    max_step = std::max(max_step, row.step_norm);
    max_dual = std::max({max_dual, row.dual_norm, row.dual_step_norm});
  }
  inputs.b_omega = stacked_omega_bound(game) + max_step;
  inputs.b_dual = max_dual;
  inputs.b_dual_empirical = true;
  inputs.b_y = trace.initial_state.y.size() > 0 ? trace.initial_state.y.norm() : 0.0;

  const double alpha_norm = plan.alpha.maxCoeff();
  const double coupling_norm = consts.coupling_norms.maxCoeff();
  const double drive = consts.lip_epg * inputs.b_omega + coupling_norm * inputs.b_dual;
  const double eps1 = 2.0 * inputs.theta * alpha_norm * drive;
  const double eps2 = 4.0 * (inputs.theta / inputs.rho) * alpha_norm * drive;
  const double eps3 = inputs.b_omega + alpha_norm * consts.lip_epg * inputs.b_omega;
  inputs.delta1 = 2.0 * eps1 / inputs.rho;
  inputs.delta2 = 2.0 * eps2 + 2.0 * eps3 + inputs.b_omega;
  return inputs;
}

std::vector<double> phi_sequence(const BoundInputs& inputs, int k_max) {
  if (!(inputs.rho > 0.0 && inputs.rho < 1.0)) {
    throw InvalidParams("phi_sequence: rho must lie in (0, 1)");
  }
  std::vector<double> phi(static_cast<std::size_t>(k_max) + 1);
  phi[0] = inputs.delta1 / inputs.rho;
  for (int k = 1; k <= k_max; ++k) {
    phi[static_cast<std::size_t>(k)] = inputs.rho * phi[static_cast<std::size_t>(k) - 1] +
                                       inputs.delta2 * gamma_at(inputs.gamma, k - 1);
  }
  return phi;
}

TrackingBoundReport tracking_bound_check(const RunTrace& trace, const BoundInputs& inputs) {
  TrackingBoundReport report;
  const double theta = inputs.theta;
  const double rho = inputs.rho;
  double rho_pow = 1.0;       // rho^k
  double gamma_conv = 0.0;    // sum_{s=1..k} rho^(k-s) gamma^(s-1)
  double phi_conv = 0.0;      // sum_{s=1..k} rho^(k-s) phi^(s-1)
  double phi_k = inputs.delta1 / rho;

  auto check = [&report](int k, char series, double measured, double bound, double& ratio) {
    if (bound > 0.0) ratio = std::max(ratio, measured / bound);
    if (measured > bound * (1.0 + 1e-12) + 1e-9) {
      report.violations.push_back({k, series, measured, bound});
    }
  };

  for (std::size_t idx = 0; idx < trace.rows.size(); ++idx) {
    const TraceRow& row = trace.rows[idx];
    const int k = row.k;
    if (k != static_cast<int>(idx)) {
      throw InvalidParams("tracking_bound_check needs a contiguous trace starting at iteration zero");
    }
    if (k > 0) {
      const double gamma_prev = trace.rows[idx - 1].gamma;
      gamma_conv = rho * gamma_conv + gamma_prev;
      phi_conv = rho * phi_conv + phi_k;
      phi_k = rho * phi_k + inputs.delta2 * gamma_prev;
      rho_pow *= rho;
    }
    const double sigma_bound = theta * inputs.b_omega * (rho_pow + gamma_conv);
    const double z_bound = theta * inputs.b_dual * (rho_pow + gamma_conv);
    const double y_bound = theta * inputs.b_y * rho_pow + phi_conv + phi_k;
    check(k, 's', row.track_sigma, sigma_bound, report.max_ratio_sigma);
    check(k, 'z', row.track_z, z_bound, report.max_ratio_z);
    check(k, 'y', row.track_y, y_bound, report.max_ratio_y);
    ++report.checked;
  }
  return report;
}

ShadowBoundReport shadow_bound_check(const RunTrace& trace, const GameConstants& consts,
                               const StepPlan& plan) {
  ShadowBoundReport report;
  const double alpha_norm = plan.alpha.maxCoeff();
  const double beta_norm = plan.beta.maxCoeff();
  const double coupling_norm = consts.coupling_norms.maxCoeff();
  for (const TraceRow& row : trace.rows) {
    const double bound = consts.lip_epg * alpha_norm * row.track_sigma +
                         beta_norm * row.track_y +
                         (alpha_norm * coupling_norm + beta_norm) * row.track_z;
    if (bound > 0.0) report.max_ratio = std::max(report.max_ratio, row.err_norm / bound);
    if (row.err_norm > bound + 1e-9) {
      ++report.violations;
      report.max_excess = std::max(report.max_excess, row.err_norm - bound);
    }
    ++report.checked;
  }
  return report;
}

SummabilityReport summability_report(const RunTrace& trace) {
  SummabilityReport report;
  report.error_partial_sums.reserve(trace.rows.size());
  report.c1_partial_sums.reserve(trace.rows.size());
  double s = 0.0;
  double c1 = 0.0;
  for (const TraceRow& row : trace.rows) {
    s += row.gamma * row.err_norm;
    c1 += row.gamma * (1.0 - row.gamma);
    report.error_partial_sums.push_back(s);
    report.c1_partial_sums.push_back(c1);
  }
  if (report.error_partial_sums.empty()) return report;

  const std::size_t last = report.error_partial_sums.size() - 1;
  const std::size_t three_quarters = (report.error_partial_sums.size() * 3) / 4;
  const double s_end = report.error_partial_sums[last];
  if (s_end > 0.0) {
    report.last_quarter_ratio =
        (s_end - report.error_partial_sums[three_quarters]) / s_end;
    report.cauchy_flag = report.last_quarter_ratio < 0.01;
  } else {
    report.cauchy_flag = true;
  }

  report.c1_strictly_increasing = report.c1_partial_sums.size() > 1;
  for (std::size_t k = 1; k < report.c1_partial_sums.size(); ++k) {
    if (!(report.c1_partial_sums[k] > report.c1_partial_sums[k - 1])) {
      report.c1_strictly_increasing = false;
      break;
    }
  }
  const double c1_end = report.c1_partial_sums[last];
  if (c1_end > 0.0) {
    report.c1_last_quarter_share = (c1_end - report.c1_partial_sums[three_quarters]) / c1_end;
  }
  return report;
}

MetricsSeries convergence_metrics(const RunTrace& trace, const VectorXd& reference_x) {
  if (reference_x.size() == 0) {
    throw MissingReference("convergence_metrics: empty reference");
  }
  MetricsSeries series;
  const bool in_run = !trace.rows.empty() && std::isfinite(trace.rows.front().norm_residual);
  if (in_run) {
    series.ks.reserve(trace.rows.size());
    for (const TraceRow& row : trace.rows) {
      series.ks.push_back(row.k);
      series.norm_residual.push_back(row.norm_residual);
      series.consensus_dual.push_back(row.consensus_dual);
      series.track_sigma.push_back(row.track_sigma);
      series.track_y.push_back(row.track_y);
      series.track_z.push_back(row.track_z);
    }
    return series;
  }
  if (trace.x_snapshots.empty()) {
    throw MissingReference("convergence_metrics: run recorded neither residuals nor snapshots");
  }
  if (trace.initial_state.x.size() != reference_x.size()) {
    throw DimensionMismatch("convergence_metrics: reference length mismatch");
  }
  const double denom = (trace.initial_state.x - reference_x).norm();
  for (std::size_t s = 0; s < trace.x_snapshots.size(); ++s) {
    const int k = trace.snapshot_ks[s];
    series.ks.push_back(k);
    series.norm_residual.push_back(
        denom > 0.0 ? (trace.x_snapshots[s] - reference_x).norm() / denom : 0.0);
    const auto& row = trace.rows[static_cast<std::size_t>(k)];
    series.consensus_dual.push_back(row.consensus_dual);
    series.track_sigma.push_back(row.track_sigma);
    series.track_y.push_back(row.track_y);
    series.track_z.push_back(row.track_z);
  }
  return series;
}

}  // namespace gne
