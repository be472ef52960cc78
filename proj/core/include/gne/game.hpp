// Aggregative game model: agent costs, pseudo-gradients, coupling constraints,
// and randomized Nash-Cournot instance construction.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gne/errors.hpp"
#include "gne/linalg.hpp"

namespace gne {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Closed interval for a uniform parameter draw.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Range for the per-market capacity upper bound r. When `relative_to_demand`
/// is set, r_l is drawn uniformly from [lo*d_l, hi*d_l]; otherwise from [lo, hi].
struct CapacityRange {
  bool relative_to_demand = true;
  double lo = 1.0;
  double hi = 2.0;
};

/// Parameters for the randomized Nash-Cournot family.
struct CournotParams {
  int n_agents = 20;
  int n_markets = 10;
  Interval a{2.0, 3.0};
  Interval b{2.0, 12.0};
  Interval u{50.0, 100.0};
  Interval d{90.0, 100.0};
  CapacityRange r{};
};

/// Axis-aligned box {lower <= x <= upper}.
struct Box {
  VectorXd lower;
  VectorXd upper;
};

/// Box intersected with one halfspace {normal' x <= offset}.
struct BoxHalfspace {
  VectorXd lower;
  VectorXd upper;
  VectorXd normal;
  double offset = 0.0;
};

/// Finite list of halfspaces {rows_a x <= rows_b}; carries a strictly
/// feasible point as its non-emptiness certificate.
struct Polyhedron {
  MatrixXd rows_a;
  VectorXd rows_b;
  VectorXd strict_point;
};

using LocalSetDesc = std::variant<Box, BoxHalfspace, Polyhedron>;

/// One agent's quadratic cost data, local set, and coupling blocks.
struct AgentSpec {
  MatrixXd quad_matrix;      // symmetric PSD
  VectorXd lin_vector;
  LocalSetDesc local_set;
  MatrixXd coupling_block;   // C_i, coupling_dim x decision_dim
  VectorXd coupling_offset;  // c_i, coupling_dim
};

/// Gradient of agent i's cost in its own decision, evaluated at (v_i, w_i)
/// where w_i is the agent's estimate of the decision average.
using GradCallback =
    std::function<VectorXd(int i, const VectorXd& vi, const VectorXd& wi)>;
/// Agent i's cost at (x_i, xbar).
using CostCallback =
    std::function<double(int i, const VectorXd& xi, const VectorXd& xbar)>;

/// Immutable description of the aggregative game.
struct GameInstance {
  int n_agents = 0;
  int decision_dim = 0;   // n, shared by all agents
  int coupling_dim = 0;   // m
  std::vector<AgentSpec> agents;
  MatrixXd agg_coupling;  // diagonal 0/1 matrix selecting average-coupled coordinates
  VectorXd slater;        // stacked point with strict slack in every coupling row
  bool quadratic = true;
  GradCallback grad_callback;  // required when quadratic == false
  CostCallback cost_callback;
  std::uint64_t seed = 0;
  std::string kind = "custom";
  CournotParams params{};

  Eigen::VectorBlock<const VectorXd> agent_segment(const VectorXd& x, int i) const {
    return x.segment(static_cast<Eigen::Index>(i) * decision_dim, decision_dim);
  }
};

/// Derived constants of the game's pseudo-gradient map.
struct GameConstants {
  double p_norm = 0.0;    // spectral norm of the affine map's matrix
  double coco = 0.0;      // cocoercivity constant, 1/p_norm
  double lip_epg = 0.0;   // operator norm of the extended map's Jacobian [d/dv, d/dw]
  double delta = 0.0;     // min{1, coco}
  double tau_min = 0.0;   // 1/(2*delta)
  VectorXd coupling_norms;
  double coupling_norm_avg = 0.0;
};

/// Builds a randomized Nash-Cournot instance; deterministic in `seed`.
/// Throws InfeasibleInstance when no strictly feasible point exists.
GameInstance build_cournot(const CournotParams& params, std::uint64_t seed);

/// Average decision across agents.
VectorXd decision_average(const GameInstance& game, const VectorXd& x);

/// Stacked pseudo-gradient F(x) (each agent's own-cost gradient at the true average).
VectorXd pseudo_gradient(const GameInstance& game, const VectorXd& x);

/// Stacked extended pseudo-gradient F(v, w): agent i's gradient with its own
/// estimate w_i of the average in place of the true one.
VectorXd extended_pseudo_gradient(const GameInstance& game, const VectorXd& v,
                                  const VectorXd& w);

/// Computes spectral constants by power iteration (tolerance 1e-10, capped at
/// 10000 iterations). Throws NotSupported for non-quadratic games.
GameConstants constants(const GameInstance& game);

/// Aggregate coupling slack: sum_i (C_i x_i - c_i); feasible iff all entries <= 0.
VectorXd coupling_violation(const GameInstance& game, const VectorXd& x);

/// Agent i's cost at decision xi when the decision average is xbar.
double agent_cost(const GameInstance& game, int i, const VectorXd& xi,
                  const VectorXd& xbar);

/// Serialization for exact replay.
std::string game_to_json(const GameInstance& game);
GameInstance game_from_json(const std::string& text);

}  // namespace gne
