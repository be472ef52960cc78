// Runtime verification of the convergence machinery: tracking invariance,
// the exact-average shadow error, the vanishing bound sequence, the tracking
// error bounds, and the summability evidence.
#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gne/algorithms.hpp"
#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/network.hpp"

namespace gne {

/// Gaps between the tracking-estimate means and the averages they follow.
struct InvarianceGaps {
  double sigma_gap = 0.0;
  double y_gap = 0.0;
  double z_gap = 0.0;
};

/// Distance of mean(sigma), mean(y), mean(z) from the decision average, the
/// lagged reflected-violation average, and the dual average. With doubly
/// stochastic mixing all three stay at roundoff level for every iteration.
InvarianceGaps tracking_invariance(const GameInstance& game, const IterateState& state);

/// Recomputes one full iteration from `state` under `mixing` and returns the
/// norm of the gap to the exact-average update from the same point. The
/// exact-average dual step consumes the averaged reflected violation of this
/// iteration's primal candidate, matching the lag convention of the y update.
double shadow_error(const GameInstance& game, const StepPlan& plan,
                    const IterateState& state, const MatrixXd& mixing,
                    const std::optional<double>& dual_cap = {});

/// Constants feeding the tracking-error bounds.
struct BoundInputs {
  double theta = 0.0;
  double rho = 0.0;
  double b_omega = 0.0;  // stacked local-set norm bound plus max primal step
  double b_dual = 0.0;   // dual trajectory bound
  double b_y = 0.0;      // initial y norm
  double delta1 = 0.0;
  double delta2 = 0.0;
  GammaSpec gamma{PowerLaw{}};
  bool b_dual_empirical = true;
};

/// Upper bound on the norm of any stacked point of the local sets, computed
/// from the box bounds. Throws NotSupported for polyhedral sets.
double stacked_omega_bound(const GameInstance& game);

/// Assembles all bound constants from a decay certificate and a finished run:
/// the dual bound and the primal-step part of b_omega are measured from the
/// trace, delta1/delta2 from the closed-form constants.
BoundInputs assemble_bound_inputs(const GameInstance& game, const GameConstants& consts,
                                  const StepPlan& plan, const DecayCertificate& cert,
                                  const RunTrace& trace);

/// The vanishing sequence phi^k = delta1 rho^(k-1) + delta2 sum_{l=1..k}
/// rho^(k-l) gamma^(l-1), with phi^0 = delta1 / rho; returns phi^0..phi^k_max.
std::vector<double> phi_sequence(const BoundInputs& inputs, int k_max);

struct TrackingBoundViolation {
  int k = 0;
  char series = ' ';  // 's', 'z', or 'y'
  double measured = 0.0;
  double bound = 0.0;
};

struct TrackingBoundReport {
  std::vector<TrackingBoundViolation> violations;
  int checked = 0;
  double max_ratio_sigma = 0.0;
  double max_ratio_z = 0.0;
  double max_ratio_y = 0.0;
  bool ok() const { return violations.empty(); }
};

/// Checks at every recorded iteration that the measured tracking errors stay
/// under their geometric-plus-convolution bounds:
///   sigma_err <= theta B_Omega (rho^k + sum_s rho^(k-s) gamma^(s-1)),
///   z_err     <= theta B_D    (rho^k + sum_s rho^(k-s) gamma^(s-1)),
///   y_err     <= theta B_Y rho^k + sum_s rho^(k-s) phi^(s-1) + phi^k.
TrackingBoundReport tracking_bound_check(const RunTrace& trace, const BoundInputs& inputs);

struct ShadowBoundReport {
  int violations = 0;
  int checked = 0;
  double max_excess = 0.0;
  double max_ratio = 0.0;
  bool ok() const { return violations == 0; }
};

/// Checks at every recorded iteration that the measured shadow error stays
/// under L_F ||alpha|| sigma_err + ||beta|| y_err + (||alpha|| ||C|| +
/// ||beta||) z_err plus 1e-9 slack.
ShadowBoundReport shadow_bound_check(const RunTrace& trace, const GameConstants& consts,
                               const StepPlan& plan);

struct SummabilityReport {
  std::vector<double> error_partial_sums;  // S_K = sum_{k<=K} gamma^k ||e^k||
  std::vector<double> c1_partial_sums;     // sum_{k<=K} gamma^k (1 - gamma^k)
  bool cauchy_flag = false;                // last-quarter increment < 1% of S_end
  double last_quarter_ratio = 0.0;
  bool c1_strictly_increasing = false;     // strict growth from k >= 1 on
  double c1_last_quarter_share = 0.0;
};

/// Partial-sum evidence for the two relaxed-error conditions: the divergent
/// relaxation series and the summable weighted error series.
SummabilityReport summability_report(const RunTrace& trace);

/// Plot-ready series extracted from a trace against a reference primal.
struct MetricsSeries {
  std::vector<int> ks;
  std::vector<double> norm_residual;
  std::vector<double> consensus_dual;
  std::vector<double> track_sigma;
  std::vector<double> track_y;
  std::vector<double> track_z;
};

/// Normalized residual, dual consensus disagreement, and tracking-error
/// series. Uses the in-run residual column when present, otherwise recomputes
/// it from stored snapshots; throws MissingReference when neither the
/// reference nor the data to apply it is available.
MetricsSeries convergence_metrics(const RunTrace& trace, const VectorXd& reference_x);

}  // namespace gne
