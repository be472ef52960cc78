// The three equilibrium-seeking solvers and their step-size plans, iterate
// state, and trace records.
#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/network.hpp"
#include "gne/operators.hpp"

namespace gne {

/// Relaxation schedule gamma^k = (k+1)^(-b); valid for b in (1/2, 1].
struct PowerLaw {
  double b = 0.51;
};

/// Constant relaxation; valid in [0, 1/nu].
struct ConstantGamma {
  double value = 1.0;
};

/// Explicit per-iteration values; runs past the list throw ScheduleExhausted.
struct CustomGamma {
  std::vector<double> values;
};

using GammaSpec = std::variant<PowerLaw, ConstantGamma, CustomGamma>;

/// Relaxation value at iteration k (0-based).
double gamma_at(const GammaSpec& spec, int k);

/// Validated step sizes shared by the solvers. alpha/beta sit exactly at
/// their admissible upper bounds for the given tau.
struct StepPlan {
  VectorXd alpha;
  VectorXd beta;
  GammaSpec gamma{PowerLaw{}};
  double tau = 0.0;
  double delta = 0.0;
  double nu = 0.0;
  /// Factor applied to min_i beta_i for the central dual step of the
  /// semi-decentralized solver; at 1.0 the bound step can cycle on tightly
  /// coupled instances, so the default backs off by half.
  double alg1_dual_safety = 0.5;
};

/// Builds the plan from game constants: tau = (1 + tau_margin)/(2 delta),
/// alpha_i = (||C_i|| + tau)^-1, beta_i = (avg ||C_j|| + tau)^-1,
/// nu = 2 delta tau / (4 delta tau - 1). Throws InvalidGamma when the
/// schedule violates its admissible range.
StepPlan make_step_plan(const GameConstants& consts, double tau_margin,
                        const GammaSpec& gamma);

/// Full solver state. Algorithms 1 and 2 use x and lambda only; the tracking
/// fields belong to the partial-information solver.
struct IterateState {
  VectorXd x;
  VectorXd lambda;
  VectorXd sigma;         // tracks the decision average
  VectorXd y;             // tracks the reflected violation average
  VectorXd z;             // tracks the dual average
  VectorXd x_prev;        // one-step lag for the y update
  VectorXd x_tilde_prev;  // one-step lag for the y update
  int k = 0;
};

/// Per-iteration record; rows describe the state at the top of iteration k
/// together with the quantities produced during that iteration.
struct TraceRow {
  int k = 0;
  double kkt_residual = 0.0;
  double norm_residual = std::numeric_limits<double>::quiet_NaN();
  double consensus_dual = 0.0;
  double track_sigma = 0.0;
  double track_y = 0.0;
  double track_z = 0.0;
  double err_norm = 0.0;
  double gamma = 0.0;
  double partial_sum_gamma_err = 0.0;
  double dual_norm = 0.0;
  double dual_step_norm = 0.0;
  double step_norm = 0.0;
  double fix_residual = 0.0;
  double inv_sigma = 0.0;
  double inv_y = 0.0;
  double inv_z = 0.0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  std::string status;  // "kkt_tol", "fixed_point", or "max_iter"
  IterateState initial_state;
  IterateState final_state;
  int snapshot_stride = 0;
  std::vector<int> snapshot_ks;
  std::vector<VectorXd> x_snapshots;
  std::vector<VectorXd> lambda_snapshots;
};

/// Optional knobs shared by the solvers; defaults reproduce the plain runs.
struct RunOptions {
  /// Reference primal for the normalized-residual column; NaN when absent.
  std::optional<VectorXd> reference_x;
  /// Record (x, lambda) every `snapshot_stride` iterations; 0 disables.
  int snapshot_stride = 0;
  /// Upper box for the dual projection of the partial-information solver.
  std::optional<double> dual_cap;
  /// Reuse schedule slots cyclically past the horizon instead of throwing.
  bool cycle_schedule = true;
  /// Replace the consensus estimates by the exact averages each iteration
  /// (diagnostic mode; collapses the partial-information solver to the
  /// full-information one).
  bool exact_averaging = false;
  /// Supplies the mixing matrix for iteration k, bypassing the schedule.
  std::function<MatrixXd(int)> mixing_override;
  /// Observes (k, state at top of iteration k, mixing matrix used).
  std::function<void(int, const IterateState&, const MatrixXd&)> iteration_hook;
  /// Stop the partial-information solver once the KKT residual at the dual
  /// mean falls below this value; 0 disables.
  double kkt_stop = 0.0;
};

/// Semi-decentralized solver: projected pseudo-gradient steps against a
/// shared dual (length m), central dual ascent on the averaged reflected
/// violation. Stops at kkt_tol; records one row per visited iterate.
RunTrace run_algorithm1(const GameInstance& game, const StepPlan& plan, const VectorXd& x0,
                        const VectorXd& lambda0, int max_iter, double kkt_tol,
                        const RunOptions& options = {});

/// Full-information distributed solver: relaxed fixed-point iteration of the
/// projected forward-backward map with stacked duals (length m*N). Stops when
/// the preconditioner-norm fixed-point residual falls below fix_tol.
RunTrace run_algorithm2(const GameInstance& game, const StepPlan& plan, const VectorXd& x0,
                        const VectorXd& lambda0, int max_iter, double fix_tol,
                        const RunOptions& options = {});

/// Initial tracking state: sigma = x, z = lambda, lagged iterates set to x,
/// and y seeded with each agent's own constraint violation.
IterateState init_algorithm3_state(const GameInstance& game, const VectorXd& x0,
                                   const VectorXd& lambda0);

/// Partial-information solver over a time-varying network: consensus step on
/// (sigma, y, z), projected primal and dual steps against the local
/// estimates, relaxation, then the tracking updates. `schedule` may be null
/// only when options.mixing_override is set.
RunTrace run_algorithm3(const GameInstance& game, const StepPlan& plan,
                        const GraphSchedule* schedule, MixingVariant variant,
                        const VectorXd& x0, const VectorXd& lambda0, int max_iter,
                        const RunOptions& options = {});

/// Relaxed update current + gamma (candidate - current).
VectorXd km_step(const VectorXd& current, const VectorXd& candidate, double gamma);

/// Writes the trace columns (k, kkt_residual, norm_residual, consensus_dual,
/// track_sigma, track_y, track_z, err_norm, gamma, partial_sum_gamma_err) in
/// round-trippable "%.17g" format.
void write_trace_csv(const RunTrace& trace, const std::string& path);

/// Aligned per-k normalized-residual columns for several labeled traces.
void write_comparison_csv(const std::vector<std::pair<std::string, const RunTrace*>>& traces,
                          const std::string& path);

}  // namespace gne
