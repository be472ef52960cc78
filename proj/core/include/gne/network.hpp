// Time-varying communication graphs, Metropolis mixing matrices, and
// geometric-decay certificates for their transition products.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gne/errors.hpp"

namespace gne {

using Eigen::MatrixXd;

using EdgeList = std::vector<std::pair<int, int>>;

/// Watts-Strogatz style graph with the given (even) neighbor count,
/// rewired and resampled until connected; redrawn independently each slot.
struct SmallWorld {
  int neighbors = 4;
};

/// Ring edges dealt round-robin over q consecutive slots; single slots are
/// disconnected but every q-window union is the full ring.
struct RingSplit {
  int q = 2;
};

/// Erdos-Renyi draw with edge probability p, resampled until connected.
struct ErdosRenyiConnected {
  double p = 0.5;
};

using ScheduleKind = std::variant<SmallWorld, RingSplit, ErdosRenyiConnected>;

/// Materialized time-indexed edge sets over a finite horizon.
struct GraphSchedule {
  int n_nodes = 0;
  int horizon = 0;
  int q_window = 1;
  ScheduleKind kind;
  std::uint64_t seed = 0;
  std::vector<EdgeList> edges;

  /// Edge set at slot k; cycles past the horizon when `cycle` is set,
  /// otherwise throws ScheduleExhausted.
  const EdgeList& edges_at(int k, bool cycle = true) const;
};

enum class MixingVariant { PaperExact, SafeDiagonal };

/// Doubly stochastic weights for one graph slot.
struct MixingMatrix {
  MatrixXd weights;
  double epsilon = 0.0;  // smallest used weight (edges and diagonal)
};

struct ValidationReport {
  bool edge_weights_ok = false;
  bool diagonal_ok = false;
  bool doubly_stochastic_ok = false;
  double max_feasible_epsilon = 0.0;
  std::vector<std::string> failures;
  bool ok() const { return edge_weights_ok && diagonal_ok && doubly_stochastic_ok; }
};

/// Geometric decay certificate for transition products.
struct DecayCertificate {
  double theta = 0.0;
  double rho = 0.0;
  struct Sample {
    int k = 0;
    int s = 0;
    double norm = 0.0;
    double bound = 0.0;
  };
  std::vector<Sample> observed;
  bool valid = false;
};

/// Generates a deterministic schedule of per-slot graphs.
GraphSchedule generate_schedule(const ScheduleKind& kind, int n_nodes, int horizon,
                                std::uint64_t seed);

/// Metropolis weights for one slot. PaperExact uses 1/max(deg_i, deg_j);
/// SafeDiagonal uses 1/(1 + max(deg_i, deg_j)), which keeps the diagonal positive.
MixingMatrix metropolis_weights(const EdgeList& edges, int n_nodes, MixingVariant variant);

/// Checks edge utilization, positive diagonal, and double stochasticity.
ValidationReport verify_mixing(const MatrixXd& weights, const EdgeList& edges,
                               double epsilon);

/// Transition product W(k) W(k-1) ... W(s). Throws RangeError unless 0 <= s <= k.
MatrixXd transition_matrix(const GraphSchedule& schedule, MixingVariant variant, int k,
                           int s);

/// Evaluates the geometric decay bound on sampled (k, s) pairs.
/// Throws AssumptionViolated when mixing validation or window connectivity fails.
DecayCertificate certify_decay(const GraphSchedule& schedule, MixingVariant variant,
                               double epsilon, int q,
                               const std::vector<std::pair<int, int>>& sample_pairs);

/// True when the union of the slots [k_begin, k_end) forms a connected graph.
bool union_connected(const GraphSchedule& schedule, int k_begin, int k_end);

/// Serialization with per-slot edge lists.
std::string schedule_to_json(const GraphSchedule& schedule);
GraphSchedule schedule_from_json(const std::string& text);

}  // namespace gne
