#include <cmath>
#include <optional>
#include <vector>

#include "doctest.h"
#include "gne/algorithms.hpp"
#include "gne/diagnostics.hpp"
#include "gne/network.hpp"
#include "test_support.hpp"

using namespace gne;
using gne::testing::toy_single;
using gne::testing::toy_three;

namespace {

StepPlan plan_for(const GameInstance& g, const GammaSpec& gamma) {
  return make_step_plan(constants(g), 0.05, gamma);
}

TraceRow synth_row(int k, double gamma, double s, double z, double y) {
  TraceRow row;
  row.k = k;
  row.gamma = gamma;
  row.track_sigma = s;
  row.track_z = z;
  row.track_y = y;
  return row;
}

BoundInputs unit_inputs() {
  BoundInputs inputs;
  inputs.theta = 1.0;
  inputs.rho = 0.5;
  inputs.b_omega = 1.0;
  inputs.b_dual = 1.0;
  inputs.b_y = 1.0;
  inputs.delta1 = 1.0;
  inputs.delta2 = 1.0;
  inputs.gamma = ConstantGamma{1.0};
  return inputs;
}

}  // namespace

TEST_CASE("phi sequence matches hand-computed values") {
  BoundInputs inputs = unit_inputs();

  SUBCASE("unit constants with constant relaxation give a flat sequence") {
    const std::vector<double> phi = phi_sequence(inputs, 4);
    REQUIRE(phi.size() == 5);
    for (double v : phi) CHECK(v == doctest::Approx(2.0).epsilon(1e-14));
  }

  SUBCASE("zero delta2 leaves a pure geometric decay") {
    inputs.delta1 = 3.0;
    inputs.delta2 = 0.0;
    const std::vector<double> phi = phi_sequence(inputs, 2);
    CHECK(phi[0] == doctest::Approx(6.0));
    CHECK(phi[1] == doctest::Approx(3.0));
    CHECK(phi[2] == doctest::Approx(1.5));
  }

  SUBCASE("power-law relaxation feeds through gamma") {
    inputs.delta1 = 2.0;
    inputs.delta2 = 5.0;
    inputs.rho = 0.3;
    inputs.gamma = PowerLaw{0.51};
    const std::vector<double> phi = phi_sequence(inputs, 2);
    CHECK(phi[0] == doctest::Approx(2.0 / 0.3).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(phi[2] == doctest::Approx(2.1 + 5.0 * std::pow(2.0, -0.51)).epsilon(1e-12));
  }

  SUBCASE("rho outside (0, 1) is rejected") {
    inputs.rho = 1.0;
    CHECK_THROWS_AS(phi_sequence(inputs, 3), InvalidParams);
    inputs.rho = 0.0;
    CHECK_THROWS_AS(phi_sequence(inputs, 3), InvalidParams);
  }
}

TEST_CASE("stacked local-set bound from box corners") {
  GameInstance g = toy_single();
  CHECK(stacked_omega_bound(g) == doctest::Approx(std::sqrt(200.0)).epsilon(1e-14));

  Box asym;
  asym.lower = (VectorXd(2) << -1.0, 0.0).finished();
  asym.upper = (VectorXd(2) << 2.0, 3.0).finished();
  g.agents[0].local_set = asym;
  CHECK(stacked_omega_bound(g) == doctest::Approx(std::sqrt(13.0)).epsilon(1e-14));

  CHECK(stacked_omega_bound(toy_three()) == doctest::Approx(std::sqrt(24.0)).epsilon(1e-14));

  Polyhedron poly;
  poly.rows_a = MatrixXd::Identity(1, 2);
  poly.rows_b = VectorXd::Ones(1);
  poly.strict_point = VectorXd::Zero(2);
  g.agents[0].local_set = poly;
  CHECK_THROWS_AS(stacked_omega_bound(g), NotSupported);
}

TEST_CASE("tracking means follow the averages they estimate") {
  const GameInstance g = toy_three();
  const IterateState s0 = init_algorithm3_state(g, g.slater, VectorXd::Zero(6));

  SUBCASE("fresh state has zero gaps") {
    const InvarianceGaps gaps = tracking_invariance(g, s0);
    CHECK(gaps.sigma_gap <= 1e-15);
    CHECK(gaps.y_gap <= 1e-15);
    CHECK(gaps.z_gap <= 1e-15);
  }

  SUBCASE("gaps stay at roundoff through a real run") {
    const GraphSchedule schedule = generate_schedule(RingSplit{2}, 3, 40, 5);
    const RunTrace trace =
        run_algorithm3(g, plan_for(g, PowerLaw{0.51}), &schedule,
                       MixingVariant::SafeDiagonal, g.slater, VectorXd::Zero(6), 40);
    const InvarianceGaps gaps = tracking_invariance(g, trace.final_state);
    CHECK(gaps.sigma_gap <= 1e-10);
    CHECK(gaps.y_gap <= 1e-10);
    CHECK(gaps.z_gap <= 1e-10);
  }

  SUBCASE("a corrupted tracker is detected") {
    IterateState bad = s0;
    bad.y(0) += 1.0;
    const InvarianceGaps gaps = tracking_invariance(g, bad);
    CHECK(gaps.y_gap == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(gaps.sigma_gap <= 1e-15);
    CHECK(gaps.z_gap <= 1e-15);
  }

  SUBCASE("states without tracking fields are rejected") {
    IterateState flat;
    flat.x = g.slater;
    flat.lambda = VectorXd::Zero(6);
    CHECK_THROWS_AS(tracking_invariance(g, flat), DimensionMismatch);
  }
}

TEST_CASE("shadow error recomputation matches the in-run column") {
  const GameInstance g = toy_three();
  const StepPlan plan = plan_for(g, PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(RingSplit{2}, 3, 30, 11);

  std::vector<IterateState> states;
  std::vector<MatrixXd> mixes;
  RunOptions options;
  options.iteration_hook = [&](int, const IterateState& st, const MatrixXd& w) {
    states.push_back(st);
    mixes.push_back(w);
  };

  SUBCASE("uncapped duals") {
    const RunTrace trace = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                          g.slater, VectorXd::Zero(6), 30, options);
    REQUIRE(states.size() == trace.rows.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double recomputed = shadow_error(g, plan, states[k], mixes[k]);
      CHECK(std::abs(recomputed - trace.rows[k].err_norm) <=
            1e-12 * std::max(1.0, trace.rows[k].err_norm));
    }
  }

  SUBCASE("capped duals") {
    options.dual_cap = 0.01;
    const RunTrace trace = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                          g.slater, VectorXd::Zero(6), 30, options);
    REQUIRE(states.size() == trace.rows.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double recomputed = shadow_error(g, plan, states[k], mixes[k], 0.01);
      CHECK(std::abs(recomputed - trace.rows[k].err_norm) <=
            1e-12 * std::max(1.0, trace.rows[k].err_norm));
    }
  }
}

TEST_CASE("tracking bounds evaluate the recursive envelopes") {
  const BoundInputs inputs = unit_inputs();
  RunTrace trace;
  trace.rows.push_back(synth_row(0, 1.0, 0.9, 0.5, 2.9));
  trace.rows.push_back(synth_row(1, 1.0, 1.4, 1.0, 4.4));
  trace.rows.push_back(synth_row(2, 1.0, 1.7, 1.5, 5.2));

  SUBCASE("measurements under the envelope pass") {
    const TrackingBoundReport report = tracking_bound_check(trace, inputs);
    CHECK(report.ok());
    CHECK(report.checked == 3);
    CHECK(report.max_ratio_sigma == doctest::Approx(1.7 / 1.75).epsilon(1e-12));
    CHECK(report.max_ratio_z == doctest::Approx(1.5 / 1.75).epsilon(1e-12));
    CHECK(report.max_ratio_y == doctest::Approx(5.2 / 5.25).epsilon(1e-12));
  }

  SUBCASE("violations carry the right iteration, series, and bound") {
    trace.rows[0].track_y = 3.1;
    trace.rows[1].track_sigma = 1.6;
    const TrackingBoundReport report = tracking_bound_check(trace, inputs);
    REQUIRE(report.violations.size() == 2);
    CHECK(report.violations[0].k == 0);
    CHECK(report.violations[0].series == 'y');
    CHECK(report.violations[0].measured == doctest::Approx(3.1));
    CHECK(report.violations[0].bound == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(report.violations[1].k == 1);
    CHECK(report.violations[1].series == 's');
    CHECK(report.violations[1].bound == doctest::Approx(1.5).epsilon(1e-12));
    CHECK_FALSE(report.ok());
  }

  SUBCASE("gapped traces are rejected") {
    trace.rows[1].k = 2;
    trace.rows[2].k = 4;
    CHECK_THROWS_AS(tracking_bound_check(trace, inputs), InvalidParams);
  }
}

TEST_CASE("shadow bound flags errors above the tracking combination") {
  const GameInstance g = toy_three();
  const GameConstants consts = constants(g);
  const StepPlan plan = plan_for(g, ConstantGamma{0.5});
  const double alpha_norm = plan.alpha.maxCoeff();
  const double beta_norm = plan.beta.maxCoeff();
  const double coupling_norm = consts.coupling_norms.maxCoeff();
  const double bound = consts.lip_epg * alpha_norm * 0.1 + beta_norm * 0.2 +
                       (alpha_norm * coupling_norm + beta_norm) * 0.05;

  RunTrace trace;
  TraceRow ok_row = synth_row(0, 1.0, 0.1, 0.05, 0.2);
  ok_row.err_norm = 0.5 * bound;
  TraceRow bad_row = synth_row(1, 1.0, 0.1, 0.05, 0.2);
  bad_row.err_norm = bound + 1.0;
  trace.rows.push_back(ok_row);
  trace.rows.push_back(bad_row);

  const ShadowBoundReport report = shadow_bound_check(trace, consts, plan);
  CHECK(report.checked == 2);
  CHECK(report.violations == 1);
  CHECK(report.max_excess == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.max_ratio > 1.0);
  CHECK_FALSE(report.ok());
}

TEST_CASE("assembled bounds hold on a real partial-information run") {
  const GameInstance g = toy_three();
  const GameConstants consts = constants(g);
  const StepPlan plan = plan_for(g, PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(RingSplit{2}, 3, 40, 9);

  const std::vector<std::pair<int, int>> pairs = {
      {0, 0}, {5, 2}, {10, 0}, {20, 15}, {39, 0}, {39, 30}};
  const DecayCertificate cert =
      certify_decay(schedule, MixingVariant::SafeDiagonal, 1.0 / 3.0, 2, pairs);
  REQUIRE(cert.valid);

  const RunTrace trace = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                        g.slater, VectorXd::Zero(6), 300);
  const BoundInputs inputs = assemble_bound_inputs(g, consts, plan, cert, trace);
  CHECK(inputs.theta == doctest::Approx(cert.theta));
  CHECK(inputs.rho == doctest::Approx(cert.rho));
  CHECK(inputs.b_omega >= stacked_omega_bound(g));
  CHECK(inputs.b_y == doctest::Approx(trace.initial_state.y.norm()));

  const TrackingBoundReport tracking = tracking_bound_check(trace, inputs);
  CHECK(tracking.ok());
  CHECK(tracking.checked == 300);

  const ShadowBoundReport shadow = shadow_bound_check(trace, consts, plan);
  CHECK(shadow.ok());
  CHECK(shadow.checked == 300);

  const SummabilityReport summ = summability_report(trace);
  REQUIRE(summ.error_partial_sums.size() == 300);
  CHECK(summ.c1_strictly_increasing);
  CHECK(summ.c1_last_quarter_share > 0.0);
}

TEST_CASE("summability evidence separates decaying from flat error series") {
  SUBCASE("geometric errors with constant relaxation are Cauchy") {
    RunTrace trace;
    for (int k = 0; k < 60; ++k) {
      TraceRow row = synth_row(k, 1.0, 0.0, 0.0, 0.0);
      row.err_norm = std::pow(0.5, k);
      trace.rows.push_back(row);
    }
    const SummabilityReport report = summability_report(trace);
    CHECK(report.cauchy_flag);
    CHECK(report.last_quarter_ratio < 0.01);
    CHECK_FALSE(report.c1_strictly_increasing);
    CHECK(report.c1_partial_sums.back() == doctest::Approx(0.0));
  }

  SUBCASE("flat errors with constant relaxation are not Cauchy") {
    RunTrace trace;
    for (int k = 0; k < 60; ++k) {
      TraceRow row = synth_row(k, 1.0, 0.0, 0.0, 0.0);
      row.err_norm = 1.0;
      trace.rows.push_back(row);
    }
    const SummabilityReport report = summability_report(trace);
    CHECK_FALSE(report.cauchy_flag);
    CHECK(report.last_quarter_ratio > 0.2);
  }

  SUBCASE("power-law relaxation makes the divergence series strictly increase") {
    RunTrace trace;
    for (int k = 0; k < 60; ++k) {
      TraceRow row = synth_row(k, gamma_at(PowerLaw{0.51}, k), 0.0, 0.0, 0.0);
      row.err_norm = std::pow(0.5, k);
      trace.rows.push_back(row);
    }
    const SummabilityReport report = summability_report(trace);
    CHECK(report.c1_strictly_increasing);
    CHECK(report.c1_last_quarter_share > 0.0);
  }

  SUBCASE("empty traces produce an empty report") {
    const SummabilityReport report = summability_report(RunTrace{});
    CHECK(report.error_partial_sums.empty());
    CHECK_FALSE(report.cauchy_flag);
  }
}

TEST_CASE("metric series from rows and from snapshots") {
  const GameInstance g = toy_three();
  const StepPlan plan = plan_for(g, ConstantGamma{0.5});

  SUBCASE("empty reference is rejected") {
    CHECK_THROWS_AS(convergence_metrics(RunTrace{}, VectorXd()), MissingReference);
  }

  SUBCASE("in-run residual column is passed through") {
    const GraphSchedule schedule = generate_schedule(RingSplit{2}, 3, 20, 5);
    RunOptions options;
    options.reference_x = VectorXd::Zero(6);
    const RunTrace trace = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                          g.slater, VectorXd::Zero(6), 20, options);
    const MetricsSeries series = convergence_metrics(trace, VectorXd::Zero(6));
    REQUIRE(series.ks.size() == trace.rows.size());
    for (std::size_t i = 0; i < series.ks.size(); ++i) {
      CHECK(series.norm_residual[i] == doctest::Approx(trace.rows[i].norm_residual));
      CHECK(series.track_sigma[i] == doctest::Approx(trace.rows[i].track_sigma));
    }
  }

  SUBCASE("snapshots reconstruct the residual when the column is absent") {
    RunOptions options;
    options.snapshot_stride = 5;
    const RunTrace trace =
        run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 20, -1.0, options);
    REQUIRE_FALSE(trace.x_snapshots.empty());
    const VectorXd ref = VectorXd::Constant(6, 0.1);
    const MetricsSeries series = convergence_metrics(trace, ref);
    REQUIRE(series.ks.size() == trace.x_snapshots.size());
    const double denom = (trace.initial_state.x - ref).norm();
    for (std::size_t s = 0; s < series.ks.size(); ++s) {
      CHECK(series.ks[s] == trace.snapshot_ks[s]);
      CHECK(series.norm_residual[s] ==
            doctest::Approx((trace.x_snapshots[s] - ref).norm() / denom));
    }
    CHECK_THROWS_AS(convergence_metrics(trace, VectorXd::Zero(4)), DimensionMismatch);
  }

  SUBCASE("runs with neither residuals nor snapshots are rejected") {
    const RunTrace trace = run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 20, -1.0);
    CHECK_THROWS_AS(convergence_metrics(trace, VectorXd::Zero(6)), MissingReference);
  }
}
