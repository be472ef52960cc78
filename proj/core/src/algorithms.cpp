#include "gne/algorithms.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <utility>

#include "gne/projection.hpp"

namespace gne {

namespace {

VectorXd project_stacked(const GameInstance& game, const VectorXd& x) {
  VectorXd out(x.size());
  for (int i = 0; i < game.n_agents; ++i) {
    out.segment(static_cast<Eigen::Index>(i) * game.decision_dim, game.decision_dim) =
        project_local(game.agents[i].local_set, game.agent_segment(x, i));
  }
  return out;
}

VectorXd project_dual(const VectorXd& v, const std::optional<double>& cap) {
  if (!cap) return v.cwiseMax(0.0);
  return v.cwiseMax(0.0).cwiseMin(*cap);
}

VectorXd repeat_blocks(const VectorXd& block, int count) {
  VectorXd out(block.size() * count);
  for (int i = 0; i < count; ++i) out.segment(i * block.size(), block.size()) = block;
  return out;
}

VectorXd block_mean(const VectorXd& v, int block, int count) {
  VectorXd mean = VectorXd::Zero(block);
  for (int i = 0; i < count; ++i) mean += v.segment(static_cast<Eigen::Index>(i) * block, block);
  return mean / count;
}

VectorXd mix_blocks(const MatrixXd& weights, const VectorXd& v, int block) {
  const int count = static_cast<int>(weights.rows());
  if (v.size() != static_cast<Eigen::Index>(block) * count) {
    throw DimensionMismatch("mix_blocks: stacked vector does not match the mixing matrix");
  }
  Eigen::Map<const MatrixXd> columns(v.data(), block, count);
  VectorXd out(v.size());
  Eigen::Map<MatrixXd>(out.data(), block, count) = columns * weights.transpose();
  return out;
}

double norm_residual_value(const std::optional<VectorXd>& reference, const VectorXd& x,
                           double denom) {
  if (!reference) return std::numeric_limits<double>::quiet_NaN();
  return denom > 0.0 ? (x - *reference).norm() / denom : 0.0;
}

void check_finite(const VectorXd& x, const VectorXd& lambda, int k, const char* who) {
  if (!x.allFinite() || !lambda.allFinite()) {
    throw NonFiniteIterate(std::string(who) + ": non-finite iterate at iteration " +
                           std::to_string(k));
  }
}

void maybe_snapshot(RunTrace& trace, const RunOptions& options, int k, const VectorXd& x,
                    const VectorXd& lambda) {
  if (options.snapshot_stride > 0 && k % options.snapshot_stride == 0) {
    trace.snapshot_ks.push_back(k);
    trace.x_snapshots.push_back(x);
    trace.lambda_snapshots.push_back(lambda);
  }
}

void append_field(std::string& line, double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), ",%.17g", value);
  line += buf;
}

}  // namespace

double gamma_at(const GammaSpec& spec, int k) {
  if (k < 0) throw RangeError("gamma_at: negative iteration index");
  if (const auto* pow = std::get_if<PowerLaw>(&spec)) {
    return std::pow(static_cast<double>(k) + 1.0, -pow->b);
  }
  if (const auto* constant = std::get_if<ConstantGamma>(&spec)) {
    return constant->value;
  }
  const auto& custom = std::get<CustomGamma>(spec);
  if (static_cast<std::size_t>(k) >= custom.values.size()) {
    throw ScheduleExhausted("gamma_at: custom schedule has " +
                            std::to_string(custom.values.size()) + " entries, need index " +
                            std::to_string(k));
  }
  return custom.values[static_cast<std::size_t>(k)];
}

StepPlan make_step_plan(const GameConstants& consts, double tau_margin,
                        const GammaSpec& gamma) {
  if (tau_margin < 0.0) throw InvalidParams("make_step_plan: tau_margin must be >= 0");
  StepPlan plan;
  plan.delta = consts.delta;
  plan.tau = (1.0 + tau_margin) / (2.0 * consts.delta);
  const auto n_agents = consts.coupling_norms.size();
  plan.alpha.resize(n_agents);
  plan.beta.resize(n_agents);
  for (Eigen::Index i = 0; i < n_agents; ++i) {
    plan.alpha[i] = 1.0 / (consts.coupling_norms[i] + plan.tau);
    plan.beta[i] = 1.0 / (consts.coupling_norm_avg + plan.tau);
  }
  plan.nu = 2.0 * consts.delta * plan.tau / (4.0 * consts.delta * plan.tau - 1.0);

  if (const auto* pow = std::get_if<PowerLaw>(&gamma)) {
    if (!(pow->b > 0.5 && pow->b <= 1.0)) {
      throw InvalidGamma("make_step_plan: power-law exponent " + std::to_string(pow->b) +
                         " outside (1/2, 1]");
    }
  } else if (const auto* constant = std::get_if<ConstantGamma>(&gamma)) {
    if (!(constant->value >= 0.0 && constant->value <= 1.0 / plan.nu)) {
      throw InvalidGamma("make_step_plan: constant relaxation " +
                         std::to_string(constant->value) + " outside [0, " +
                         std::to_string(1.0 / plan.nu) + "]");
    }
  } else {
    const auto& custom = std::get<CustomGamma>(gamma);
    if (custom.values.empty()) throw InvalidGamma("make_step_plan: empty custom schedule");
    for (double v : custom.values) {
      if (!(v >= 0.0 && v <= 1.0 / plan.nu)) {
        throw InvalidGamma("make_step_plan: custom relaxation " + std::to_string(v) +
                           " outside [0, " + std::to_string(1.0 / plan.nu) + "]");
      }
    }
  }
  plan.gamma = gamma;
  return plan;
}

VectorXd km_step(const VectorXd& current, const VectorXd& candidate, double gamma) {
  return current + gamma * (candidate - current);
}

RunTrace run_algorithm1(const GameInstance& game, const StepPlan& plan, const VectorXd& x0,
                        const VectorXd& lambda0, int max_iter, double kkt_tol,
                        const RunOptions& options) {
  if (lambda0.size() != game.coupling_dim) {
    throw DimensionMismatch("run_algorithm1: expected shared dual of length " +
                            std::to_string(game.coupling_dim));
  }
  const int N = game.n_agents;
  const int n = game.decision_dim;
  VectorXd x = project_stacked(game, x0);
  VectorXd lam = lambda0.cwiseMax(0.0);
  const double beta_central = plan.alg1_dual_safety * plan.beta.minCoeff();

  RunTrace trace;
  trace.snapshot_stride = options.snapshot_stride;
  trace.initial_state.x = x;
  trace.initial_state.lambda = lam;
  const double denom = options.reference_x ? (x - *options.reference_x).norm() : 0.0;

  for (int k = 0;; ++k) {
    TraceRow row;
    row.k = k;
    row.kkt_residual = kkt_residual(game, x, lam);
    row.norm_residual = norm_residual_value(options.reference_x, x, denom);
    row.gamma = 1.0;
    row.dual_norm = lam.norm();
    trace.rows.push_back(row);
    maybe_snapshot(trace, options, k, x, lam);
    if (row.kkt_residual <= kkt_tol) {
      trace.status = "kkt_tol";
      break;
    }
    if (k >= max_iter) {
      trace.status = "max_iter";
      break;
    }

    const VectorXd grad = pseudo_gradient(game, x);
    VectorXd x_next(x.size());
    VectorXd d_sum = VectorXd::Zero(game.coupling_dim);
    for (int i = 0; i < N; ++i) {
      const VectorXd xi = game.agent_segment(x, i);
      const VectorXd step =
          xi - plan.alpha[i] * (grad.segment(static_cast<Eigen::Index>(i) * n, n) +
                                game.agents[i].coupling_block.transpose() * lam);
      const VectorXd xp = project_local(game.agents[i].local_set, step);
      x_next.segment(static_cast<Eigen::Index>(i) * n, n) = xp;
      d_sum += 2.0 * (game.agents[i].coupling_block * xp) -
               game.agents[i].coupling_block * xi - game.agents[i].coupling_offset;
    }
    const VectorXd lam_next = (lam + beta_central * d_sum).cwiseMax(0.0);
    trace.rows.back().step_norm = (x_next - x).norm();
    trace.rows.back().dual_step_norm = (lam_next - lam).norm();
    x = std::move(x_next);
    lam = lam_next;
    check_finite(x, lam, k, "run_algorithm1");
  }
  trace.final_state.x = x;
  trace.final_state.lambda = lam;
  trace.final_state.k = static_cast<int>(trace.rows.size()) - 1;
  return trace;
}

RunTrace run_algorithm2(const GameInstance& game, const StepPlan& plan, const VectorXd& x0,
                        const VectorXd& lambda0, int max_iter, double fix_tol,
                        const RunOptions& options) {
  const auto dual_len = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  if (lambda0.size() != dual_len) {
    throw DimensionMismatch("run_algorithm2: expected stacked dual of length " +
                            std::to_string(dual_len));
  }
  const Preconditioner precond =
      assemble_preconditioner(game, plan.alpha, plan.beta, plan.tau, plan.nu);
  StackedPoint omega{project_stacked(game, x0), lambda0.cwiseMax(0.0)};

  RunTrace trace;
  trace.snapshot_stride = options.snapshot_stride;
  trace.initial_state.x = omega.x;
  trace.initial_state.lambda = omega.lambda;
  const double denom =
      options.reference_x ? (omega.x - *options.reference_x).norm() : 0.0;
  const int m = game.coupling_dim;

  for (int k = 0;; ++k) {
    const VectorXd lbar = block_mean(omega.lambda, m, game.n_agents);
    const StackedPoint candidate = pfb_map(game, precond, omega);
    VectorXd diff(omega.x.size() + omega.lambda.size());
    diff << candidate.x - omega.x, candidate.lambda - omega.lambda;

    TraceRow row;
    row.k = k;
    row.kkt_residual = kkt_residual(game, omega.x, lbar);
    row.norm_residual = norm_residual_value(options.reference_x, omega.x, denom);
    row.consensus_dual = (omega.lambda - repeat_blocks(lbar, game.n_agents)).norm();
    row.gamma = gamma_at(plan.gamma, k);
    row.dual_norm = omega.lambda.norm();
    row.step_norm = (candidate.x - omega.x).norm();
    row.dual_step_norm = (candidate.lambda - omega.lambda).norm();
    row.fix_residual = phi_norm(precond, diff);
    trace.rows.push_back(row);
    maybe_snapshot(trace, options, k, omega.x, omega.lambda);
    if (row.fix_residual <= fix_tol) {
      trace.status = "fixed_point";
      break;
    }
    if (k >= max_iter) {
      trace.status = "max_iter";
      break;
    }

    omega.x = km_step(omega.x, candidate.x, row.gamma);
    omega.lambda = km_step(omega.lambda, candidate.lambda, row.gamma);
    check_finite(omega.x, omega.lambda, k, "run_algorithm2");
  }
  trace.final_state.x = omega.x;
  trace.final_state.lambda = omega.lambda;
  trace.final_state.k = static_cast<int>(trace.rows.size()) - 1;
  return trace;
}

IterateState init_algorithm3_state(const GameInstance& game, const VectorXd& x0,
                                   const VectorXd& lambda0) {
  const auto dual_len = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  if (lambda0.size() != dual_len) {
    throw DimensionMismatch("init_algorithm3_state: expected stacked dual of length " +
                            std::to_string(dual_len));
  }
  IterateState state;
  state.x = project_stacked(game, x0);
  state.lambda = lambda0.cwiseMax(0.0);
  state.sigma = state.x;
  state.z = state.lambda;
  state.x_prev = state.x;
  state.x_tilde_prev = state.x;
  state.y.resize(dual_len);
  for (int i = 0; i < game.n_agents; ++i) {
    state.y.segment(static_cast<Eigen::Index>(i) * game.coupling_dim, game.coupling_dim) =
        game.agents[i].coupling_block * game.agent_segment(state.x, i) -
        game.agents[i].coupling_offset;
  }
  state.k = 0;
  return state;
}

RunTrace run_algorithm3(const GameInstance& game, const StepPlan& plan,
                        const GraphSchedule* schedule, MixingVariant variant,
                        const VectorXd& x0, const VectorXd& lambda0, int max_iter,
                        const RunOptions& options) {
  if (schedule == nullptr && !options.mixing_override && !options.exact_averaging) {
    throw InvalidParams("run_algorithm3: need a schedule or a mixing override");
  }
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  IterateState state = init_algorithm3_state(game, x0, lambda0);

  RunTrace trace;
  trace.snapshot_stride = options.snapshot_stride;
  trace.initial_state = state;
  const double denom =
      options.reference_x ? (state.x - *options.reference_x).norm() : 0.0;
  double partial_sum = 0.0;

  for (int k = 0; k < max_iter; ++k) {
    MatrixXd weights;
    if (options.mixing_override) {
      weights = options.mixing_override(k);
    } else if (schedule != nullptr) {
      weights =
          metropolis_weights(schedule->edges_at(k, options.cycle_schedule), N, variant)
              .weights;
    } else {
      weights = MatrixXd::Identity(N, N);
    }
    if (options.iteration_hook) options.iteration_hook(k, state, weights);

    const VectorXd xbar = block_mean(state.x, n, N);
    const VectorXd lbar = block_mean(state.lambda, m, N);
    const double kkt = kkt_residual(game, state.x, lbar);

    VectorXd sigma_hat, y_hat, z_hat;
    if (options.exact_averaging) {
      sigma_hat = repeat_blocks(xbar, N);
      z_hat = repeat_blocks(lbar, N);
    } else {
      sigma_hat = mix_blocks(weights, state.sigma, n);
      y_hat = mix_blocks(weights, state.y, m);
      z_hat = mix_blocks(weights, state.z, m);
    }

    const VectorXd grad = options.exact_averaging
                              ? pseudo_gradient(game, state.x)
                              : extended_pseudo_gradient(game, state.x, sigma_hat);
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

    VectorXd y_next(state.y.size());
    if (options.exact_averaging) {
      y_next = repeat_blocks(d_mean, N);
    } else {
      for (int i = 0; i < N; ++i) {
        const auto seg = static_cast<Eigen::Index>(i) * m;
        y_next.segment(seg, m) =
            y_hat.segment(seg, m) +
            game.agents[i].coupling_block *
                (2.0 * x_tilde.segment(static_cast<Eigen::Index>(i) * n, n) -
                 game.agent_segment(state.x, i)) -
            game.agents[i].coupling_block *
                (2.0 * state.x_tilde_prev.segment(static_cast<Eigen::Index>(i) * n, n) -
                 game.agent_segment(state.x_prev, i));
      }
    }

    VectorXd lambda_tilde(state.lambda.size());
    for (int i = 0; i < N; ++i) {
      const auto seg = static_cast<Eigen::Index>(i) * m;
      lambda_tilde.segment(seg, m) = project_dual(
          state.lambda.segment(seg, m) +
              plan.beta[i] * (y_next.segment(seg, m) - state.lambda.segment(seg, m) +
                              z_hat.segment(seg, m)),
          options.dual_cap);
    }

    // Exact-average comparison step: same (x, lambda), consensus estimates
    // replaced by the true means, y+ replaced by the averaged reflected
    // violation of this iteration's primal candidate.
    const VectorXd grad_exact = pseudo_gradient(game, state.x);
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
      lambda_tilde_exact.segment(seg, m) = project_dual(
          state.lambda.segment(seg, m) +
              plan.beta[i] * (d_mean - state.lambda.segment(seg, m) + lbar),
          options.dual_cap);
    }
    const double err_norm = std::sqrt((x_tilde - x_tilde_exact).squaredNorm() +
                                      (lambda_tilde - lambda_tilde_exact).squaredNorm());

    VectorXd d_prev_sum = VectorXd::Zero(m);
    for (int i = 0; i < N; ++i) {
      d_prev_sum +=
          2.0 * (game.agents[i].coupling_block *
                 state.x_tilde_prev.segment(static_cast<Eigen::Index>(i) * n, n)) -
          game.agents[i].coupling_block * game.agent_segment(state.x_prev, i) -
          game.agents[i].coupling_offset;
    }

    const double gamma = gamma_at(plan.gamma, k);
    partial_sum += gamma * err_norm;

    TraceRow row;
    row.k = k;
    row.kkt_residual = kkt;
    row.norm_residual = norm_residual_value(options.reference_x, state.x, denom);
    row.consensus_dual = (state.lambda - repeat_blocks(lbar, N)).norm();
    row.track_sigma = (sigma_hat - repeat_blocks(xbar, N)).norm();
    row.track_y = (y_next - repeat_blocks(d_mean, N)).norm();
    row.track_z = (z_hat - repeat_blocks(lbar, N)).norm();
    row.err_norm = err_norm;
    row.gamma = gamma;
    row.partial_sum_gamma_err = partial_sum;
    row.dual_norm = state.lambda.norm();
    row.dual_step_norm = (lambda_tilde - state.lambda).norm();
    row.step_norm = (x_tilde - state.x).norm();
    row.inv_sigma = (block_mean(state.sigma, n, N) - xbar).norm();
    row.inv_y = (block_mean(state.y, m, N) - d_prev_sum / N).norm();
    row.inv_z = (block_mean(state.z, m, N) - lbar).norm();
    trace.rows.push_back(row);
    maybe_snapshot(trace, options, k, state.x, state.lambda);

    const VectorXd x_next = km_step(state.x, x_tilde, gamma);
    const VectorXd lambda_next = km_step(state.lambda, lambda_tilde, gamma);
    state.sigma = sigma_hat + x_next - state.x;
    state.z = z_hat + lambda_next - state.lambda;
    state.y = y_next;
    state.x_prev = state.x;
    state.x_tilde_prev = x_tilde;
    state.x = x_next;
    state.lambda = lambda_next;
    state.k = k + 1;
    check_finite(state.x, state.lambda, k, "run_algorithm3");

    if (options.kkt_stop > 0.0 && kkt <= options.kkt_stop) {
      trace.status = "kkt_tol";
      break;
    }
  }
  if (trace.status.empty()) trace.status = "max_iter";
  trace.final_state = state;
  return trace;
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error("write_trace_csv: cannot open " + path);
  std::fputs(
      "k,kkt_residual,norm_residual,consensus_dual,track_sigma,track_y,track_z,"
      "err_norm,gamma,partial_sum_gamma_err\n",
      f);
  for (const TraceRow& row : trace.rows) {
    std::string line = std::to_string(row.k);
    append_field(line, row.kkt_residual);
    append_field(line, row.norm_residual);
    append_field(line, row.consensus_dual);
    append_field(line, row.track_sigma);
    append_field(line, row.track_y);
    append_field(line, row.track_z);
    append_field(line, row.err_norm);
    append_field(line, row.gamma);
    append_field(line, row.partial_sum_gamma_err);
    line += '\n';
    std::fputs(line.c_str(), f);
  }
  std::fclose(f);
}

void write_comparison_csv(const std::vector<std::pair<std::string, const RunTrace*>>& traces,
                          const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw Error("write_comparison_csv: cannot open " + path);
  std::string header = "k";
  std::size_t max_rows = 0;
  for (const auto& [label, trace] : traces) {
    header += ",norm_residual_" + label;
    max_rows = std::max(max_rows, trace->rows.size());
  }
  header += '\n';
  std::fputs(header.c_str(), f);
  for (std::size_t r = 0; r < max_rows; ++r) {
    std::string line = std::to_string(r);
    for (const auto& [label, trace] : traces) {
      if (r < trace->rows.size()) {
        append_field(line, trace->rows[r].norm_residual);
      } else {
        line += ',';
      }
    }
    line += '\n';
    std::fputs(line.c_str(), f);
  }
  std::fclose(f);
}

}  // namespace gne
