#include "gne/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "gne/linalg.hpp"
#include "gne/rng.hpp"

namespace gne {

namespace {

using json = nlohmann::json;

bool connected(int n, const EdgeList& edges) {
  if (n <= 1) return true;
  std::vector<std::vector<int>> adj(n);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(n, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        stack.push_back(w);
      }
    }
  }
  return count == n;
}

EdgeList ring_lattice(int n, int neighbors) {
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int off = 1; off <= neighbors / 2; ++off) {
      const int j = (i + off) % n;
      edges.emplace(std::min(i, j), std::max(i, j));
    }
  }
  return {edges.begin(), edges.end()};
}

// Watts-Strogatz rewiring with probability 0.2, deterministic in (rng, slot).
EdgeList small_world_slot(int n, int neighbors, const SplitRng& rng, int slot) {
  if (n == 2) return {{0, 1}};
  constexpr double kRewireProb = 0.2;
  for (int attempt = 0; attempt < 200; ++attempt) {
    const std::uint64_t base =
        (static_cast<std::uint64_t>(slot) << 16) | static_cast<std::uint64_t>(attempt);
    std::set<std::pair<int, int>> edges;
    for (const auto& e : ring_lattice(n, neighbors)) edges.insert(e);
    int idx = 0;
    for (const auto& e : ring_lattice(n, neighbors)) {
      ++idx;
      if (rng.unit("ws-rewire", base, idx) >= kRewireProb) continue;
      const int keep = e.first;
      // Draw a replacement endpoint distinct from `keep` and not already linked.
      for (int tries = 0; tries < 64; ++tries) {
        const int cand = static_cast<int>(
            rng.below(static_cast<std::uint64_t>(n), "ws-endpoint", base,
                      (static_cast<std::uint64_t>(idx) << 8) | static_cast<std::uint64_t>(tries)));
        if (cand == keep) continue;
        const auto candidate = std::make_pair(std::min(keep, cand), std::max(keep, cand));
        if (edges.count(candidate)) continue;
        edges.erase(e);
        edges.insert(candidate);
        break;
      }
    }
    EdgeList out(edges.begin(), edges.end());
    if (connected(n, out)) return out;
  }
  throw InvalidParams("generate_schedule: could not draw a connected small-world graph");
}

EdgeList erdos_renyi_slot(int n, double p, const SplitRng& rng, int slot) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    const std::uint64_t base =
        (static_cast<std::uint64_t>(slot) << 16) | static_cast<std::uint64_t>(attempt);
    EdgeList edges;
    std::uint64_t pair_index = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        ++pair_index;
        if (p >= 1.0 || rng.unit("er-edge", base, pair_index) < p) {
          edges.emplace_back(i, j);
        }
      }
    }
    if (connected(n, edges)) return edges;
  }
  throw InvalidParams("generate_schedule: could not draw a connected Erdos-Renyi graph");
}

}  // namespace

const EdgeList& GraphSchedule::edges_at(int k, bool cycle) const {
  if (k < 0) throw RangeError("edges_at: negative slot");
  if (k >= horizon) {
    if (!cycle) {
      throw ScheduleExhausted("edges_at: slot " + std::to_string(k) +
                              " beyond horizon " + std::to_string(horizon));
    }
    k %= horizon;
  }
  return edges[static_cast<std::size_t>(k)];
}

GraphSchedule generate_schedule(const ScheduleKind& kind, int n_nodes, int horizon,
                                std::uint64_t seed) {
  if (n_nodes < 2) throw InvalidParams("generate_schedule: need at least 2 nodes");
  if (horizon < 1) throw InvalidParams("generate_schedule: need a positive horizon");
  GraphSchedule schedule;
  schedule.n_nodes = n_nodes;
  schedule.horizon = horizon;
  schedule.kind = kind;
  schedule.seed = seed;
  schedule.edges.reserve(static_cast<std::size_t>(horizon));
  SplitRng rng(seed);

  if (const auto* sw = std::get_if<SmallWorld>(&kind)) {
    if (sw->neighbors < 2 || sw->neighbors % 2 != 0 || sw->neighbors >= n_nodes) {
      if (n_nodes != 2) {
        throw InvalidParams("generate_schedule: SmallWorld neighbors must be even and < N");
      }
    }
    schedule.q_window = 1;
    for (int k = 0; k < horizon; ++k) {
      schedule.edges.push_back(small_world_slot(n_nodes, sw->neighbors, rng, k));
    }
  } else if (const auto* rs = std::get_if<RingSplit>(&kind)) {
    if (rs->q < 1) throw InvalidParams("generate_schedule: RingSplit q must be >= 1");
    schedule.q_window = rs->q;
    for (int k = 0; k < horizon; ++k) {
      EdgeList slot_edges;
      for (int i = 0; i < n_nodes; ++i) {
        if (i % rs->q == k % rs->q) {
          const int j = (i + 1) % n_nodes;
          slot_edges.emplace_back(std::min(i, j), std::max(i, j));
        }
      }
      schedule.edges.push_back(std::move(slot_edges));
    }
  } else {
    const auto& er = std::get<ErdosRenyiConnected>(kind);
    if (!(er.p > 0.0 && er.p <= 1.0)) {
      throw InvalidParams("generate_schedule: ErdosRenyiConnected p must be in (0, 1]");
    }
    schedule.q_window = 1;
    for (int k = 0; k < horizon; ++k) {
      schedule.edges.push_back(erdos_renyi_slot(n_nodes, er.p, rng, k));
    }
  }
  return schedule;
}

MixingMatrix metropolis_weights(const EdgeList& edges, int n_nodes,
                                MixingVariant variant) {
  MixingMatrix out;
  out.weights = MatrixXd::Zero(n_nodes, n_nodes);
  std::vector<int> degree(static_cast<std::size_t>(n_nodes), 0);
  for (const auto& [i, j] : edges) {
    ++degree[static_cast<std::size_t>(i)];
    ++degree[static_cast<std::size_t>(j)];
  }
  for (const auto& [i, j] : edges) {
    const double denom = variant == MixingVariant::PaperExact
                             ? static_cast<double>(std::max(degree[i], degree[j]))
                             : 1.0 + std::max(degree[i], degree[j]);
    out.weights(i, j) = 1.0 / denom;
    out.weights(j, i) = 1.0 / denom;
  }
  double min_used = 1.0;
  for (int i = 0; i < n_nodes; ++i) {
    double row = 0.0;
    for (int j = 0; j < n_nodes; ++j) row += out.weights(i, j);
    out.weights(i, i) = 1.0 - row;
    min_used = std::min(min_used, out.weights(i, i));
  }
  for (const auto& [i, j] : edges) min_used = std::min(min_used, out.weights(i, j));
  out.epsilon = min_used;
  return out;
}

ValidationReport verify_mixing(const MatrixXd& weights, const EdgeList& edges,
                               double epsilon) {
  ValidationReport report;
  const auto n = weights.rows();
  double min_used = 1.0;

  report.edge_weights_ok = true;
  for (const auto& [i, j] : edges) {
    min_used = std::min({min_used, weights(i, j), weights(j, i)});
    if (weights(i, j) < epsilon || weights(j, i) < epsilon) {
      report.edge_weights_ok = false;
      report.failures.push_back("edge (" + std::to_string(i) + "," + std::to_string(j) +
                                ") below epsilon");
    }
  }

  report.diagonal_ok = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    min_used = std::min(min_used, weights(i, i));
    if (weights(i, i) < epsilon) {
      report.diagonal_ok = false;
      report.failures.push_back("diagonal entry " + std::to_string(i) + " below epsilon");
    }
  }

  report.doubly_stochastic_ok = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(weights.row(i).sum() - 1.0) > 1e-12 ||
        std::abs(weights.col(i).sum() - 1.0) > 1e-12) {
      report.doubly_stochastic_ok = false;
      report.failures.push_back("row/column " + std::to_string(i) + " does not sum to 1");
    }
  }
  report.max_feasible_epsilon = std::max(0.0, min_used);
  return report;
}

MatrixXd transition_matrix(const GraphSchedule& schedule, MixingVariant variant, int k,
                           int s) {
  if (s < 0 || s > k) throw RangeError("transition_matrix: need 0 <= s <= k");
  MatrixXd product =
      metropolis_weights(schedule.edges_at(s), schedule.n_nodes, variant).weights;
  for (int t = s + 1; t <= k; ++t) {
    product = metropolis_weights(schedule.edges_at(t), schedule.n_nodes, variant).weights *
              product;
  }
  return product;
}

bool union_connected(const GraphSchedule& schedule, int k_begin, int k_end) {
  EdgeList merged;
  for (int k = k_begin; k < k_end; ++k) {
    const auto& e = schedule.edges_at(k);
    merged.insert(merged.end(), e.begin(), e.end());
  }
  return connected(schedule.n_nodes, merged);
}

DecayCertificate certify_decay(const GraphSchedule& schedule, MixingVariant variant,
                               double epsilon, int q,
                               const std::vector<std::pair<int, int>>& sample_pairs) {
  for (int k = 0; k < schedule.horizon; ++k) {
    const auto mixing = metropolis_weights(schedule.edges_at(k), schedule.n_nodes, variant);
    const auto report = verify_mixing(mixing.weights, schedule.edges_at(k), epsilon);
    if (!report.ok()) {
      throw AssumptionViolated("certify_decay: mixing validation failed at slot " +
                               std::to_string(k) + ": " +
                               (report.failures.empty() ? "unknown" : report.failures[0]));
    }
  }
  for (int k = 0; k + q <= schedule.horizon; ++k) {
    if (!union_connected(schedule, k, k + q)) {
      throw AssumptionViolated("certify_decay: q-window union disconnected at slot " +
                               std::to_string(k));
    }
  }

  const double n = schedule.n_nodes;
  const double eta = epsilon / (4.0 * n * n);
  DecayCertificate cert;
  cert.rho = std::pow(1.0 - eta, 1.0 / q);
  cert.theta = n * std::pow(1.0 - eta, -2.0);
  cert.valid = true;

  const MatrixXd averaging = MatrixXd::Constant(schedule.n_nodes, schedule.n_nodes, 1.0 / n);
  for (const auto& [k, s] : sample_pairs) {
    DecayCertificate::Sample sample;
    sample.k = k;
    sample.s = s;
    sample.norm = spectral_norm(transition_matrix(schedule, variant, k, s) - averaging);
    sample.bound = cert.theta * std::pow(cert.rho, k - s);
    if (sample.norm > sample.bound) cert.valid = false;
    cert.observed.push_back(sample);
  }
  return cert;
}

std::string schedule_to_json(const GraphSchedule& schedule) {
  json j;
  j["schema_version"] = 1;
  j["n_nodes"] = schedule.n_nodes;
  j["horizon"] = schedule.horizon;
  j["q_window"] = schedule.q_window;
  j["seed"] = schedule.seed;
  if (const auto* sw = std::get_if<SmallWorld>(&schedule.kind)) {
    j["kind"] = {{"name", "small_world"}, {"neighbors", sw->neighbors}};
  } else if (const auto* rs = std::get_if<RingSplit>(&schedule.kind)) {
    j["kind"] = {{"name", "ring_split"}, {"q", rs->q}};
  } else {
    j["kind"] = {{"name", "erdos_renyi"}, {"p", std::get<ErdosRenyiConnected>(schedule.kind).p}};
  }
  json slots = json::array();
  for (const auto& slot : schedule.edges) {
    json arr = json::array();
    for (const auto& [a, b] : slot) arr.push_back({a, b});
    slots.push_back(std::move(arr));
  }
  j["edges"] = std::move(slots);
  return j.dump();
}

GraphSchedule schedule_from_json(const std::string& text) {
  const json j = json::parse(text);
  GraphSchedule schedule;
  schedule.n_nodes = j.at("n_nodes").get<int>();
  schedule.horizon = j.at("horizon").get<int>();
  schedule.q_window = j.at("q_window").get<int>();
  schedule.seed = j.at("seed").get<std::uint64_t>();
  const std::string name = j.at("kind").at("name").get<std::string>();
  if (name == "small_world") {
    schedule.kind = SmallWorld{j.at("kind").at("neighbors").get<int>()};
  } else if (name == "ring_split") {
    schedule.kind = RingSplit{j.at("kind").at("q").get<int>()};
  } else {
    schedule.kind = ErdosRenyiConnected{j.at("kind").at("p").get<double>()};
  }
  for (const auto& slot : j.at("edges")) {
    EdgeList edges;
    for (const auto& e : slot) edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    schedule.edges.push_back(std::move(edges));
  }
  return schedule;
}

}  // namespace gne
