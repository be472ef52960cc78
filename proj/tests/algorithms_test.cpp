#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "gne/algorithms.hpp"
#include "gne/diagnostics.hpp"
#include "gne/network.hpp"
#include "gne/operators.hpp"
#include "gne/rng.hpp"
#include "test_support.hpp"

using namespace gne;
using gne::testing::toy_three;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

StepPlan toy_plan(const GammaSpec& gamma) {
  const GameInstance g = toy_three();
  return make_step_plan(constants(g), 0.05, gamma);
}

}  // namespace

TEST_CASE("relaxation schedules evaluate and validate") {
  CHECK(gamma_at(PowerLaw{0.51}, 0) == doctest::Approx(1.0));
  CHECK(gamma_at(PowerLaw{0.51}, 1) == doctest::Approx(std::pow(2.0, -0.51)));
  CHECK(gamma_at(ConstantGamma{0.3}, 17) == doctest::Approx(0.3));
  CHECK(gamma_at(CustomGamma{{0.5, 0.25}}, 1) == doctest::Approx(0.25));
  CHECK_THROWS_AS(gamma_at(CustomGamma{{0.5, 0.25}}, 2), ScheduleExhausted);

  const GameConstants consts = constants(toy_three());
  CHECK_THROWS_AS(make_step_plan(consts, 0.05, PowerLaw{0.5}), InvalidGamma);
  CHECK_THROWS_AS(make_step_plan(consts, 0.05, PowerLaw{1.01}), InvalidGamma);
  const StepPlan plan = make_step_plan(consts, 0.05, ConstantGamma{1.0});
  CHECK_THROWS_AS(make_step_plan(consts, 0.05, ConstantGamma{1.0 / plan.nu + 0.01}),
                  InvalidGamma);
  CHECK_THROWS_AS(make_step_plan(consts, 0.05, CustomGamma{{0.5, 9.0}}), InvalidGamma);
}

TEST_CASE("step plan hits the closed-form values") {
  GameConstants consts;
  consts.delta = 1.0;
  consts.coupling_norms = VectorXd::Ones(2);
  consts.coupling_norm_avg = 1.0;
  const StepPlan plan = make_step_plan(consts, 1.0, ConstantGamma{1.0});
  CHECK(plan.tau == doctest::Approx(1.0));
  CHECK(plan.nu == doctest::Approx(2.0 / 3));
  CHECK(plan.alpha[0] == doctest::Approx(0.5));
  CHECK(plan.beta[1] == doctest::Approx(0.5));
}

TEST_CASE("km_step relaxes toward the candidate") {
  const VectorXd mixed = km_step((VectorXd(2) << 1, 2).finished(),
                                 (VectorXd(2) << 3, 4).finished(), 0.25);
  CHECK(mixed[0] == doctest::Approx(1.5));
  CHECK(mixed[1] == doctest::Approx(2.5));
}

TEST_CASE("dual-ascent solver reaches a KKT point on the toy game") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(ConstantGamma{1.0});
  const RunTrace trace = run_algorithm1(g, plan, g.slater, VectorXd::Zero(2), 20000, 1e-10);
  CHECK(trace.status == "kkt_tol");
  CHECK(trace.rows.back().kkt_residual <= 1e-10);
  CHECK(trace.final_state.lambda.minCoeff() >= 0.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(trace.final_state.x.segment(2 * i, 2).cwiseAbs().maxCoeff() <= 2.0 + 1e-12);
  }
}

TEST_CASE("relaxed fixed-point solver is Fejer monotone in the step metric") {
  const GameInstance g = toy_three();
  const GameConstants consts = constants(g);
  const StepPlan plan = make_step_plan(consts, 0.05, ConstantGamma{1.0});
  RunOptions options;
  options.snapshot_stride = 1;
  const RunTrace trace = run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 4000, 1e-12,
                                        options);
  REQUIRE(trace.status == "fixed_point");

  const Preconditioner pre =
      assemble_preconditioner(g, plan.alpha, plan.beta, plan.tau, plan.nu);
  const VectorXd x_end = trace.final_state.x;
  const VectorXd l_end = trace.final_state.lambda;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < trace.x_snapshots.size(); ++s) {
    VectorXd stacked(x_end.size() + l_end.size());
    stacked << trace.x_snapshots[s] - x_end, trace.lambda_snapshots[s] - l_end;
    const double dist = phi_norm(pre, stacked);
    CHECK(dist <= prev + 1e-9);
    prev = dist;
  }
}

TEST_CASE("network solver keeps the tracking means pinned to their targets") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(RingSplit{2}, 3, 10, 5);

  double worst = 0.0;
  RunOptions options;
  options.iteration_hook = [&](int, const IterateState& state, const MatrixXd&) {
    const InvarianceGaps gaps = tracking_invariance(g, state);
    worst = std::max({worst, gaps.sigma_gap, gaps.y_gap, gaps.z_gap});
  };
  const RunTrace trace = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                        g.slater, VectorXd::Zero(6), 2000, options);
  CHECK(trace.status == "max_iter");
  CHECK(worst <= 1e-10);

  double peak = 0.0;
  for (const TraceRow& row : trace.rows) peak = std::max(peak, row.track_sigma);
  CHECK(peak > 0.0);
  CHECK(trace.rows.back().track_sigma < peak);
  CHECK(std::isfinite(trace.rows.back().kkt_residual));
}

TEST_CASE("exact averaging reproduces the semi-decentralized trace") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});
  const RunTrace central =
      run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 150, 0.0);

  RunOptions options;
  options.exact_averaging = true;
  const RunTrace mirrored = run_algorithm3(g, plan, nullptr, MixingVariant::SafeDiagonal,
                                           g.slater, VectorXd::Zero(6), 150, options);

  REQUIRE(central.rows.size() == mirrored.rows.size() + 1);
  CHECK((central.final_state.x - mirrored.final_state.x).cwiseAbs().maxCoeff() <= 1e-13);
  CHECK((central.final_state.lambda - mirrored.final_state.lambda).cwiseAbs().maxCoeff() <=
        1e-13);
  for (std::size_t k = 0; k < mirrored.rows.size(); ++k) {
    CHECK(central.rows[k].kkt_residual ==
          doctest::Approx(mirrored.rows[k].kkt_residual).epsilon(1e-12));
  }
}

TEST_CASE("merely row-stochastic mixing breaks the mean invariance") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});

  MatrixXd skewed(3, 3);
  skewed << 0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.4, 0.4, 0.2;

  double worst = 0.0;
  RunOptions options;
  options.mixing_override = [&](int) { return skewed; };
  options.iteration_hook = [&](int, const IterateState& state, const MatrixXd&) {
    worst = std::max(worst, tracking_invariance(g, state).sigma_gap);
  };
  run_algorithm3(g, plan, nullptr, MixingVariant::SafeDiagonal, g.slater,
                 VectorXd::Zero(6), 60, options);
  CHECK(worst > 1e-6);
}

TEST_CASE("dual iterates respect an explicit cap") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(SmallWorld{2}, 3, 20, 5);

  RunOptions options;
  options.dual_cap = 0.01;
  options.iteration_hook = [&](int, const IterateState& state, const MatrixXd&) {
    CHECK(state.lambda.maxCoeff() <= 0.01 + 1e-15);
  };
  run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal, g.slater,
                 VectorXd::Zero(6), 100, options);
}

TEST_CASE("network solver guards its inputs") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});
  CHECK_THROWS_AS(run_algorithm3(g, plan, nullptr, MixingVariant::SafeDiagonal, g.slater,
                                 VectorXd::Zero(6), 10, {}),
                  InvalidParams);

  const GraphSchedule schedule = generate_schedule(SmallWorld{2}, 3, 5, 5);
  RunOptions no_cycle;
  no_cycle.cycle_schedule = false;
  CHECK_THROWS_AS(run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                 g.slater, VectorXd::Zero(6), 10, no_cycle),
                  ScheduleExhausted);
}

TEST_CASE("non-finite iterates raise instead of propagating") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(ConstantGamma{1.0});
  VectorXd x0 = g.slater;
  x0(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(run_algorithm1(g, plan, x0, VectorXd::Zero(2), 10, -1.0), NonFiniteIterate);
  CHECK_THROWS_AS(run_algorithm2(g, plan, x0, VectorXd::Zero(6), 10, -1.0), NonFiniteIterate);
}

TEST_CASE("trace files are stable across reruns") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(SmallWorld{2}, 3, 20, 5);
  RunOptions options;
  options.reference_x = VectorXd::Zero(6);

  const RunTrace a = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                    g.slater, VectorXd::Zero(6), 20, options);
  const RunTrace b = run_algorithm3(g, plan, &schedule, MixingVariant::SafeDiagonal,
                                    g.slater, VectorXd::Zero(6), 20, options);

  const auto path_a = temp_file("gne_trace_a.csv");
  const auto path_b = temp_file("gne_trace_b.csv");
  write_trace_csv(a, path_a.string());
  write_trace_csv(b, path_b.string());

  const std::string text_a = slurp(path_a);
  CHECK(text_a == slurp(path_b));
  CHECK(text_a.substr(0, text_a.find('\n')) ==
        "k,kkt_residual,norm_residual,consensus_dual,track_sigma,track_y,track_z,"
        "err_norm,gamma,partial_sum_gamma_err");
  CHECK(std::count(text_a.begin(), text_a.end(), '\n') == 21);
  std::filesystem::remove(path_a);
  std::filesystem::remove(path_b);
}

TEST_CASE("comparison files align runs of different lengths") {
  const GameInstance g = toy_three();
  const StepPlan plan = toy_plan(ConstantGamma{1.0});
  RunOptions options;
  options.reference_x = VectorXd::Zero(6);
  const RunTrace longer =
      run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 30, 0.0, options);
  const RunTrace shorter =
      run_algorithm2(g, plan, g.slater, VectorXd::Zero(6), 10, 0.0, options);

  const auto path = temp_file("gne_compare.csv");
  write_comparison_csv({{"long", &longer}, {"short", &shorter}}, path.string());
  const std::string text = slurp(path);
  CHECK(text.substr(0, text.find('\n')) == "k,norm_residual_long,norm_residual_short");
  CHECK(std::count(text.begin(), text.end(), '\n') == 32);
  std::filesystem::remove(path);
}
