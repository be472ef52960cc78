#include <cmath>

#include "doctest.h"
#include "gne/game.hpp"
#include "gne/oracle.hpp"
#include "gne/rng.hpp"
#include "test_support.hpp"

using namespace gne;
using gne::testing::small_cournot;
using gne::testing::toy_single;
using gne::testing::toy_three;

TEST_CASE("single-agent map has the hand-computed values") {
  const GameInstance g = toy_single();
  const VectorXd x = (VectorXd(2) << 1, 1).finished();

  const VectorXd f = pseudo_gradient(g, x);
  CHECK(f[0] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(f[1] == doctest::Approx(-88.0).epsilon(1e-14));

  const VectorXd w = (VectorXd(2) << 0, 3).finished();
  const VectorXd fe = extended_pseudo_gradient(g, x, w);
  CHECK(fe[0] == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(fe[1] == doctest::Approx(-86.0).epsilon(1e-14));

  const GameConstants c = constants(g);
  CHECK(c.p_norm == doctest::Approx(4.0).epsilon(1e-8));
  CHECK(c.coco == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(c.delta == doctest::Approx(0.25).epsilon(1e-8));
  CHECK(c.tau_min == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(c.coupling_norms[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("extended map at the true average reduces to the plain map") {
  const GameInstance g = toy_three();
  const SplitRng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd x(6);
    for (int j = 0; j < 6; ++j) x[j] = rng.uniform(-2.0, 2.0, "x", trial, j);
    const VectorXd xbar = decision_average(g, x);
    const VectorXd w = xbar.replicate(3, 1);
    CHECK((extended_pseudo_gradient(g, x, w) - pseudo_gradient(g, x)).norm() < 1e-12);
  }
}

TEST_CASE("pseudo-gradient matches the numeric derivative of agent costs") {
  const GameInstance g = toy_three();
  const SplitRng rng(9);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    VectorXd x(6);
    for (int j = 0; j < 6; ++j) x[j] = rng.uniform(-1.5, 1.5, "x", trial, j);
    const VectorXd xbar = decision_average(g, x);
    const VectorXd f = pseudo_gradient(g, x);
    for (int i = 0; i < 3; ++i) {
      const VectorXd xi = g.agent_segment(x, i);
      for (int j = 0; j < 2; ++j) {
        VectorXd e = VectorXd::Zero(2);
        e[j] = 1.0;
        const double up = agent_cost(g, i, xi + h * e, xbar + (h / 3.0) * e);
        const double dn = agent_cost(g, i, xi - h * e, xbar - (h / 3.0) * e);
        const double numeric = (up - dn) / (2.0 * h);
        CHECK(numeric == doctest::Approx(f[2 * i + j]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("coupling violation is strictly negative at the slater point") {
  const GameInstance g = toy_three();
  CHECK(coupling_violation(g, g.slater).maxCoeff() < -0.1);
}

TEST_CASE("market builder produces the documented structure") {
  const GameInstance g = small_cournot();
  CHECK(g.n_agents == 4);
  CHECK(g.decision_dim == 6);
  CHECK(g.coupling_dim == 6);
  CHECK(g.kind == "cournot");

  CHECK(coupling_violation(g, g.slater).maxCoeff() < 0.0);

  const GameConstants c = constants(g);
  for (int i = 0; i < g.n_agents; ++i) {
    CHECK(c.coupling_norms[i] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
  }

  for (int j = 0; j < g.decision_dim; ++j) {
    const double expected = j < g.decision_dim / 2 ? 0.0 : 1.0;
    CHECK(g.agg_coupling(j, j) == expected);
  }

  const GameInstance again = small_cournot();
  CHECK(instance_hash(again) == instance_hash(g));
  CournotParams params;
  params.n_agents = 4;
  params.n_markets = 3;
  CHECK(instance_hash(build_cournot(params, 8)) != instance_hash(g));
}

TEST_CASE("market builder rejects demand beyond total capacity") {
  CournotParams params;
  params.n_agents = 2;
  params.u = {40.0, 40.0};
  params.d = {90.0, 90.0};
  CHECK_THROWS_AS(build_cournot(params, 1), InfeasibleInstance);
}

TEST_CASE("serialization round-trips the instance") {
  const GameInstance g = toy_three();
  const GameInstance back = game_from_json(game_to_json(g));
  CHECK(instance_hash(back) == instance_hash(g));

  const SplitRng rng(13);
  VectorXd x(6);
  for (int j = 0; j < 6; ++j) x[j] = rng.uniform(-2.0, 2.0, "x", 0, j);
  CHECK((pseudo_gradient(back, x) - pseudo_gradient(g, x)).norm() == 0.0);

  GameInstance perturbed = toy_three();
  perturbed.agents[1].lin_vector[0] += 1e-9;
  CHECK(instance_hash(perturbed) != instance_hash(g));

  const GameInstance market = small_cournot();
  CHECK(instance_hash(game_from_json(game_to_json(market))) == instance_hash(market));
}

TEST_CASE("dimension and index guards") {
  const GameInstance g = toy_three();
  CHECK_THROWS_AS(pseudo_gradient(g, VectorXd::Zero(5)), DimensionMismatch);
  CHECK_THROWS_AS(agent_cost(g, 7, VectorXd::Zero(2), VectorXd::Zero(2)), RangeError);
}
