#pragma once

#include <cstdint>
#include <string>

#include "gne/game.hpp"

namespace gne {

/// Independently computed equilibrium used as ground truth by tests and the CLI.
struct ReferenceSolution {
  VectorXd x_star;
  VectorXd lambda_star;  // shared multiplier, length coupling_dim
  double kkt_certificate = 0.0;
  double route_gap = 0.0;  // relative disagreement between the two solvers
  std::string method;
  int iterations = 0;
};

/// Solves for the variational equilibrium along two independent routes
/// (projected-gradient dual ascent and extragradient on the stacked
/// primal-dual inclusion) and cross-checks them. Throws NoConvergence when
/// either route stalls or the routes disagree beyond 10x the tolerance, and
/// AssumptionViolated when the game map is not strongly monotone.
ReferenceSolution solve_reference(const GameInstance& game, double tol = 1e-10,
                                  int max_iter = 200000);

/// A priori bound on the equilibrium multiplier norm from a strictly feasible
/// point. Throws NotStrictlyFeasible when the point has no coupling slack.
double dual_bound(const GameInstance& game, const VectorXd& slater, double extra = 0.0);

/// Result of sampling unilateral deviations around a candidate equilibrium.
struct DeviationReport {
  int tested = 0;
  int skipped = 0;
  double max_improvement = 0.0;  // largest cost decrease any deviation achieved
};

/// Samples random feasible unilateral deviations and records the best cost
/// improvement any agent can realize against the candidate solution.
DeviationReport gne_deviation_check(const GameInstance& game, const ReferenceSolution& ref,
                                    int n_samples, std::uint64_t seed);

/// Content hash of the serialized instance, used to pin references to games.
std::uint64_t instance_hash(const GameInstance& game);

/// Reference (de)serialization. Loading verifies the stored instance hash and
/// throws InstanceMismatch when the file belongs to a different game;
/// a missing or unreadable file raises MissingReference.
void save_reference(const std::string& path, const GameInstance& game,
                    const ReferenceSolution& ref);
ReferenceSolution load_reference(const std::string& path, const GameInstance& game);

}  // namespace gne
