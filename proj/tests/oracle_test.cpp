#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gne/oracle.hpp"
#include "gne/projection.hpp"
#include "test_support.hpp"

using namespace gne;
using gne::testing::toy_single;
using gne::testing::toy_three;

namespace {

GameInstance degenerate_flat() {
  GameInstance g;
  g.n_agents = 1;
  g.decision_dim = 1;
  g.coupling_dim = 1;
  AgentSpec a;
  a.quad_matrix = MatrixXd::Zero(1, 1);
  a.lin_vector = (VectorXd(1) << 1.0).finished();
  a.local_set = Box{VectorXd::Zero(1), VectorXd::Ones(1)};
  a.coupling_block = MatrixXd::Identity(1, 1);
  a.coupling_offset = (VectorXd(1) << 2.0).finished();
  g.agents.push_back(std::move(a));
  g.agg_coupling = MatrixXd::Zero(1, 1);
  g.slater = (VectorXd(1) << 0.5).finished();
  g.kind = "degenerate-flat";
  return g;
}

}  // namespace

TEST_CASE("reference solver certifies an equilibrium on the three-agent toy") {
  const GameInstance g = toy_three();
  const ReferenceSolution ref = solve_reference(g, 1e-10);

  CHECK(ref.kkt_certificate <= 1e-10);
  CHECK(ref.route_gap <= 1e-9);
  CHECK(ref.iterations > 0);
  CHECK_FALSE(ref.method.empty());
  REQUIRE(ref.x_star.size() == 6);
  REQUIRE(ref.lambda_star.size() == 2);

  for (int i = 0; i < g.n_agents; ++i) {
    const VectorXd xi = g.agent_segment(ref.x_star, i);
    CHECK((project_local(g.agents[i].local_set, xi) - xi).norm() <= 1e-12);
  }
  CHECK(ref.lambda_star.minCoeff() >= -1e-12);

  const VectorXd viol = coupling_violation(g, ref.x_star);
  CHECK(viol.maxCoeff() <= 1e-8);
  for (int j = 0; j < viol.size(); ++j) {
    CHECK(std::abs(ref.lambda_star[j] * viol[j]) <= 1e-7);
  }
}

TEST_CASE("sampled unilateral deviations cannot improve on the reference") {
  const GameInstance g = toy_three();
  const ReferenceSolution ref = solve_reference(g, 1e-10);
  const DeviationReport report = gne_deviation_check(g, ref, 200, 3);
  CHECK(report.tested + report.skipped == 200);
  CHECK(report.tested >= 150);
  CHECK(report.max_improvement <= 1e-8);
}

TEST_CASE("a priori dual bound dominates the computed multiplier") {
  const GameInstance g = toy_three();
  const ReferenceSolution ref = solve_reference(g, 1e-10);
  const double bound = dual_bound(g, g.slater);
  CHECK(std::isfinite(bound));
  CHECK(bound > 0.0);
  CHECK(bound >= ref.lambda_star.norm());
  CHECK(dual_bound(g, g.slater, 5.0) == doctest::Approx(bound + 5.0));
  CHECK_THROWS_AS(dual_bound(g, VectorXd::Constant(6, 2.0)), NotStrictlyFeasible);
}

TEST_CASE("reference files round-trip and stay pinned to their instance") {
  const GameInstance g = toy_three();
  const ReferenceSolution ref = solve_reference(g, 1e-10);
  const auto path = std::filesystem::temp_directory_path() / "gne_oracle_ref.json";
  save_reference(path.string(), g, ref);

  const ReferenceSolution back = load_reference(path.string(), g);
  CHECK((back.x_star - ref.x_star).norm() <= 1e-15);
  CHECK((back.lambda_star - ref.lambda_star).norm() <= 1e-15);
  CHECK(back.kkt_certificate == doctest::Approx(ref.kkt_certificate));
  CHECK(back.route_gap == doctest::Approx(ref.route_gap));
  CHECK(back.method == ref.method);

  CHECK_THROWS_AS(load_reference(path.string(), toy_single()), InstanceMismatch);
  CHECK_THROWS_AS(load_reference("/nonexistent/gne_ref.json", g), MissingReference);

  const auto corrupt = std::filesystem::temp_directory_path() / "gne_oracle_bad.json";
  {
    std::ofstream out(corrupt);
    out << "not json";
  }
  CHECK_THROWS_AS(load_reference(corrupt.string(), g), MissingReference);
  std::filesystem::remove(path);
  std::filesystem::remove(corrupt);
}

TEST_CASE("hash pins the exact instance") {
  const GameInstance g = toy_three();
  CHECK(instance_hash(g) == instance_hash(toy_three()));
  GameInstance tweaked = toy_three();
  tweaked.agents[1].lin_vector(0) += 1e-9;
  CHECK(instance_hash(g) != instance_hash(tweaked));
}

TEST_CASE("unreachable tolerances and degenerate maps are reported") {
  CHECK_THROWS_AS(solve_reference(toy_three(), 1e-16, 10), NoConvergence);
  CHECK_THROWS_AS(solve_reference(degenerate_flat(), 1e-8), AssumptionViolated);
}
