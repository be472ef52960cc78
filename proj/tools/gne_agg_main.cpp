// gne-agg: experiment driver for the aggregative-game solvers.
//   run      solve one configuration, write traces and diagnostics
//   compare  run several configurations against one shared instance
//   verify   structural property suites with machine-readable reports
//   oracle   solve and cache the reference equilibrium
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure,
// 3 verification violations.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gne/algorithms.hpp"
#include "gne/diagnostics.hpp"
#include "gne/errors.hpp"
#include "gne/game.hpp"
#include "gne/network.hpp"
#include "gne/operators.hpp"
#include "gne/oracle.hpp"
#include "gne/rng.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace gne;

constexpr int kSchemaVersion = 1;

/// Fully resolved experiment configuration; defaults describe the 20-firm,
/// 10-market Cournot instance on a 4-neighbor small-world schedule.
struct CliConfig {
  std::string instance_file;
  int agents = 20;
  int markets = 10;
  std::optional<std::uint64_t> instance_seed;

  std::string topology = "small-world";
  int neighbors = 4;
  int ring_slots = 2;
  double edge_prob = 0.5;
  std::string mixing = "safe-diagonal";
  int horizon = 0;
  std::optional<std::uint64_t> network_seed;

  std::vector<int> algorithms = {3};
  std::string gamma = "pow:0.51";
  double tau_margin = 0.05;
  int max_iter = 20000;
  double kkt_tol = 1e-8;
  double fix_tol = 1e-13;
  std::uint64_t seed = 1;
  std::optional<double> dual_cap;
  int snapshot_stride = 0;
  double reference_tol = 1e-10;
  bool unsafe_gamma = false;

  int verify_samples = 0;
  double alpha_scale = 1.0;

  std::string out_dir = "out";
};

CliConfig preset_paper_v() {
  CliConfig cfg;
  cfg.algorithms = {1, 3};
  return cfg;
}

void expect_keys(const json& node, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : node.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) {
      throw InvalidParams("unknown key \"" + item.key() + "\" in " + where);
    }
  }
}

template <typename T>
void read_field(const json& node, const char* key, T& target) {
  if (node.contains(key)) node.at(key).get_to(target);
}

void read_seed_field(const json& node, const char* key,
                     std::optional<std::uint64_t>& target) {
  if (node.contains(key) && !node.at(key).is_null()) {
    target = node.at(key).get<std::uint64_t>();
  }
}

/// Merges one schema-versioned JSON document into `cfg`. Unknown keys and
/// unsupported schema versions are configuration errors.
void apply_config_json(CliConfig& cfg, const json& doc, const std::string& source) {
  if (!doc.is_object()) throw InvalidParams(source + ": top level must be an object");
  expect_keys(doc, source, {"schema_version", "instance", "network", "run", "verify"});
  if (!doc.contains("schema_version")) {
    throw InvalidParams(source + ": missing schema_version");
  }
  const int version = doc.at("schema_version").get<int>();
  if (version != kSchemaVersion) {
    throw InvalidParams(source + ": schema_version " + std::to_string(version) +
                        " unsupported (this build reads version " +
                        std::to_string(kSchemaVersion) + ")");
  }

  if (doc.contains("instance")) {
    const json& node = doc.at("instance");
    expect_keys(node, source + ".instance", {"kind", "file", "agents", "markets", "seed"});
    if (node.contains("kind") && node.at("kind").get<std::string>() != "cournot") {
      throw InvalidParams(source + ".instance: kind must be \"cournot\"");
    }
    read_field(node, "file", cfg.instance_file);
    read_field(node, "agents", cfg.agents);
    read_field(node, "markets", cfg.markets);
    read_seed_field(node, "seed", cfg.instance_seed);
  }

  if (doc.contains("network")) {
    const json& node = doc.at("network");
    expect_keys(node, source + ".network",
                {"topology", "neighbors", "ring_slots", "edge_prob", "mixing", "horizon",
                 "seed"});
    read_field(node, "topology", cfg.topology);
    read_field(node, "neighbors", cfg.neighbors);
    read_field(node, "ring_slots", cfg.ring_slots);
    read_field(node, "edge_prob", cfg.edge_prob);
    read_field(node, "mixing", cfg.mixing);
    read_field(node, "horizon", cfg.horizon);
    read_seed_field(node, "seed", cfg.network_seed);
  }

  if (doc.contains("run")) {
    const json& node = doc.at("run");
    expect_keys(node, source + ".run",
                {"algorithms", "gamma", "tau_margin", "max_iter", "kkt_tol", "fix_tol",
                 "seed", "dual_cap", "snapshot_stride", "reference_tol", "unsafe_gamma"});
    read_field(node, "algorithms", cfg.algorithms);
    read_field(node, "gamma", cfg.gamma);
    read_field(node, "tau_margin", cfg.tau_margin);
    read_field(node, "max_iter", cfg.max_iter);
    read_field(node, "kkt_tol", cfg.kkt_tol);
    read_field(node, "fix_tol", cfg.fix_tol);
    read_field(node, "seed", cfg.seed);
    if (node.contains("dual_cap") && !node.at("dual_cap").is_null()) {
      cfg.dual_cap = node.at("dual_cap").get<double>();
    }
    read_field(node, "snapshot_stride", cfg.snapshot_stride);
    read_field(node, "reference_tol", cfg.reference_tol);
    read_field(node, "unsafe_gamma", cfg.unsafe_gamma);
  }

  if (doc.contains("verify")) {
    const json& node = doc.at("verify");
    expect_keys(node, source + ".verify", {"samples", "alpha_scale"});
    read_field(node, "samples", cfg.verify_samples);
    read_field(node, "alpha_scale", cfg.alpha_scale);
  }
}

void load_config_file(CliConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParams("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InvalidParams(path + ": " + e.what());
  }
  apply_config_json(cfg, doc, path);
}

GammaSpec parse_gamma(const std::string& text);

void validate_config(const CliConfig& cfg) {
  if (cfg.instance_file.empty()) {
    if (cfg.agents < 2) throw InvalidParams("instance needs at least 2 agents");
    if (cfg.markets < 1) throw InvalidParams("instance needs at least 1 market");
  }
  static const std::vector<std::string> topologies = {"small-world", "ring-split",
                                                      "erdos-renyi"};
  if (std::find(topologies.begin(), topologies.end(), cfg.topology) == topologies.end()) {
    throw InvalidParams("topology must be small-world, ring-split, or erdos-renyi");
  }
  if (cfg.mixing != "safe-diagonal" && cfg.mixing != "paper-exact") {
    throw InvalidParams("mixing must be safe-diagonal or paper-exact");
  }
  parse_gamma(cfg.gamma);
  if (cfg.algorithms.empty()) throw InvalidParams("select at least one algorithm");
  for (int algo : cfg.algorithms) {
    if (algo < 1 || algo > 3) throw InvalidParams("algorithms must be 1, 2, or 3");
  }
  if (cfg.max_iter < 1) throw InvalidParams("max_iter must be positive");
  if (cfg.horizon < 0) throw InvalidParams("horizon must be nonnegative");
  if (cfg.tau_margin <= 0.0) throw InvalidParams("tau_margin must be positive");
  if (cfg.snapshot_stride < 0) throw InvalidParams("snapshot_stride must be nonnegative");
  if (cfg.reference_tol <= 0.0) throw InvalidParams("reference_tol must be positive");
  if (cfg.verify_samples < 0) throw InvalidParams("verify.samples must be nonnegative");
  if (cfg.alpha_scale <= 0.0) throw InvalidParams("verify.alpha_scale must be positive");
}

json echo_json(const CliConfig& cfg) {
  json instance = {{"kind", "cournot"},
                   {"agents", cfg.agents},
                   {"markets", cfg.markets},
                   {"seed", cfg.instance_seed.value_or(cfg.seed)}};
  if (!cfg.instance_file.empty()) instance["file"] = cfg.instance_file;
  json run = {{"algorithms", cfg.algorithms},
              {"gamma", cfg.gamma},
              {"tau_margin", cfg.tau_margin},
              {"max_iter", cfg.max_iter},
              {"kkt_tol", cfg.kkt_tol},
              {"fix_tol", cfg.fix_tol},
              {"seed", cfg.seed},
              {"dual_cap", cfg.dual_cap ? json(*cfg.dual_cap) : json(nullptr)},
              {"snapshot_stride", cfg.snapshot_stride},
              {"reference_tol", cfg.reference_tol},
              {"unsafe_gamma", cfg.unsafe_gamma}};
  return json{{"schema_version", kSchemaVersion},
              {"instance", instance},
              {"network",
               {{"topology", cfg.topology},
                {"neighbors", cfg.neighbors},
                {"ring_slots", cfg.ring_slots},
                {"edge_prob", cfg.edge_prob},
                {"mixing", cfg.mixing},
                {"horizon", cfg.horizon > 0 ? cfg.horizon : cfg.max_iter},
                {"seed", cfg.network_seed.value_or(cfg.seed)}}},
              {"run", run},
              {"verify", {{"samples", cfg.verify_samples}, {"alpha_scale", cfg.alpha_scale}}}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidParams("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  write_text(path, doc.dump(2) + "\n");
}

std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

GameInstance build_instance(const CliConfig& cfg) {
  if (!cfg.instance_file.empty()) {
    std::ifstream in(cfg.instance_file);
    if (!in) throw InvalidParams("cannot open instance file " + cfg.instance_file);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return game_from_json(buffer.str());
  }
  CournotParams params;
  params.n_agents = cfg.agents;
  params.n_markets = cfg.markets;
  return build_cournot(params, cfg.instance_seed.value_or(cfg.seed));
}

ScheduleKind schedule_kind(const CliConfig& cfg) {
  if (cfg.topology == "small-world") return SmallWorld{cfg.neighbors};
  if (cfg.topology == "ring-split") return RingSplit{cfg.ring_slots};
  return ErdosRenyiConnected{cfg.edge_prob};
}

MixingVariant mixing_variant(const CliConfig& cfg) {
  return cfg.mixing == "paper-exact" ? MixingVariant::PaperExact
                                     : MixingVariant::SafeDiagonal;
}

GraphSchedule build_schedule(const CliConfig& cfg, int n_agents) {
  const int horizon = cfg.horizon > 0 ? cfg.horizon : cfg.max_iter;
  return generate_schedule(schedule_kind(cfg), n_agents, horizon,
                           cfg.network_seed.value_or(cfg.seed));
}

GammaSpec parse_gamma(const std::string& text) {
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    const std::string head = text.substr(0, colon);
    const std::string tail = text.substr(colon + 1);
    try {
      std::size_t used = 0;
      const double value = std::stod(tail, &used);
      if (used == tail.size()) {
        if (head == "pow") return PowerLaw{value};
        if (head == "const") return ConstantGamma{value};
      }
    } catch (const std::exception&) {
    }
  }
  throw InvalidParams("gamma must look like pow:B or const:V, got \"" + text + "\"");
}

StepPlan plan_for(const CliConfig& cfg, const GameConstants& consts) {
  const GammaSpec gamma = parse_gamma(cfg.gamma);
  if (!cfg.unsafe_gamma) return make_step_plan(consts, cfg.tau_margin, gamma);
  StepPlan plan = make_step_plan(consts, cfg.tau_margin, PowerLaw{0.51});
  plan.gamma = gamma;
  std::cerr << "warning: --unsafe-gamma bypasses the relaxation-schedule validation; "
               "convergence is no longer guaranteed\n";
  return plan;
}

/// Loads the cached reference when its instance hash matches and its
/// certificate meets the requested tolerance; solves and saves otherwise.
ReferenceSolution reference_for(const CliConfig& cfg, const GameInstance& game,
                                const std::filesystem::path& path, bool& cached) {
  cached = false;
  if (std::filesystem::exists(path)) {
    try {
      ReferenceSolution ref = load_reference(path.string(), game);
      if (ref.kkt_certificate <= cfg.reference_tol) {
        cached = true;
        return ref;
      }
    } catch (const Error&) {
    }
  }
  const ReferenceSolution ref = solve_reference(game, cfg.reference_tol);
  save_reference(path.string(), game, ref);
  return ref;
}

std::vector<std::pair<int, int>> decay_sample_pairs(const GraphSchedule& schedule,
                                                    int n_samples, std::uint64_t seed) {
  SplitRng rng(seed);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n_samples));
  for (int t = 0; t < n_samples; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    const int s = static_cast<int>(rng.below(schedule.horizon, "s", tu, 0));
    const int span = 1 + static_cast<int>(rng.below(400, "span", tu, 1));
    pairs.emplace_back(std::min(s + span, schedule.horizon - 1), s);
  }
  return pairs;
}

double min_slot_epsilon(const GraphSchedule& schedule, MixingVariant variant) {
  double eps = 1.0;
  for (int k = 0; k < schedule.horizon; ++k) {
    eps = std::min(eps,
                   metropolis_weights(schedule.edges_at(k), schedule.n_nodes, variant)
                       .epsilon);
  }
  return eps;
}

json certificate_json(const DecayCertificate& cert) {
  double worst_ratio = 0.0;
  for (const auto& sample : cert.observed) {
    worst_ratio = std::max(worst_ratio, sample.norm / sample.bound);
  }
  return json{{"theta", cert.theta},
              {"rho", cert.rho},
              {"samples", cert.observed.size()},
              {"worst_ratio", worst_ratio},
              {"valid", cert.valid}};
}

json reference_json(const ReferenceSolution& ref, bool cached) {
  return json{{"kkt_certificate", ref.kkt_certificate},
              {"route_gap", ref.route_gap},
              {"method", ref.method},
              {"iterations", ref.iterations},
              {"cached", cached}};
}

json trace_summary_json(const RunTrace& trace) {
  const TraceRow& last = trace.rows.back();
  return json{{"status", trace.status},
              {"rows", trace.rows.size()},
              {"final_kkt", last.kkt_residual},
              {"final_norm_residual", last.norm_residual},
              {"final_consensus_dual", last.consensus_dual}};
}

struct RunArtifacts {
  RunTrace trace;
  json summary;
};

/// Runs one algorithm from the shared start point (the strictly feasible
/// stacked point, zero duals) and summarizes the trace.
RunArtifacts run_one(const CliConfig& cfg, const GameInstance& game, const StepPlan& plan,
                     const GraphSchedule* schedule, const ReferenceSolution& ref,
                     int algo) {
  RunOptions options;
  options.reference_x = ref.x_star;
  options.snapshot_stride = cfg.snapshot_stride;
  options.dual_cap = cfg.dual_cap;

  const auto shared_len = static_cast<Eigen::Index>(game.coupling_dim);
  const auto stacked_len = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;

  RunArtifacts result;
  switch (algo) {
    case 1:
      result.trace = run_algorithm1(game, plan, game.slater, VectorXd::Zero(shared_len),
                                    cfg.max_iter, cfg.kkt_tol, options);
      break;
    case 2:
      result.trace = run_algorithm2(game, plan, game.slater, VectorXd::Zero(stacked_len),
                                    cfg.max_iter, cfg.fix_tol, options);
      break;
    default:
      result.trace = run_algorithm3(game, plan, schedule, mixing_variant(cfg),
                                    game.slater, VectorXd::Zero(stacked_len),
                                    cfg.max_iter, options);
      break;
  }
  result.summary = trace_summary_json(result.trace);
  return result;
}

/// Tracking, summability, decay, and bound diagnostics for a
/// partial-information run; appended to the run summary.
void append_alg3_diagnostics(json& summary, const CliConfig& cfg, const GameInstance& game,
                             const GameConstants& consts, const StepPlan& plan,
                             const GraphSchedule& schedule, const RunTrace& trace) {
  double max_sigma = 0.0;
  double max_y = 0.0;
  double max_z = 0.0;
  for (const TraceRow& row : trace.rows) {
    max_sigma = std::max(max_sigma, row.inv_sigma);
    max_y = std::max(max_y, row.inv_y);
    max_z = std::max(max_z, row.inv_z);
  }
  const InvarianceGaps final_gaps = tracking_invariance(game, trace.final_state);
  summary["tracking"] = {{"max_inv_sigma", max_sigma},
                         {"max_inv_y", max_y},
                         {"max_inv_z", max_z},
                         {"final_sigma_gap", final_gaps.sigma_gap},
                         {"final_y_gap", final_gaps.y_gap},
                         {"final_z_gap", final_gaps.z_gap}};

  const SummabilityReport sums = summability_report(trace);
  summary["summability"] = {{"cauchy_flag", sums.cauchy_flag},
                            {"last_quarter_ratio", sums.last_quarter_ratio},
                            {"c1_strictly_increasing", sums.c1_strictly_increasing},
                            {"c1_last_quarter_share", sums.c1_last_quarter_share}};

  const MixingVariant variant = mixing_variant(cfg);
  const double eps = min_slot_epsilon(schedule, variant);
  const int n_pairs = cfg.verify_samples > 0 ? cfg.verify_samples : 100;
  const DecayCertificate cert =
      certify_decay(schedule, variant, eps, schedule.q_window,
                    decay_sample_pairs(schedule, n_pairs, cfg.network_seed.value_or(cfg.seed)));
  summary["decay_certificate"] = certificate_json(cert);

  const BoundInputs inputs = assemble_bound_inputs(game, consts, plan, cert, trace);
  const TrackingBoundReport tracking = tracking_bound_check(trace, inputs);
  const ShadowBoundReport shadow = shadow_bound_check(trace, consts, plan);
  summary["bounds"] = {{"tracking",
                        {{"checked", tracking.checked},
                         {"violations", tracking.violations.size()},
                         {"max_ratio_sigma", tracking.max_ratio_sigma},
                         {"max_ratio_z", tracking.max_ratio_z},
                         {"max_ratio_y", tracking.max_ratio_y}}},
                       {"shadow",
                        {{"checked", shadow.checked},
                         {"violations", shadow.violations},
                         {"max_ratio", shadow.max_ratio}}}};
}

int cmd_run(const CliConfig& cfg) {
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  const GameInstance game = build_instance(cfg);
  const GameConstants consts = constants(game);
  const StepPlan plan = plan_for(cfg, consts);

  bool cached = false;
  const ReferenceSolution ref = reference_for(cfg, game, out / "reference.json", cached);
  std::cout << "reference: kkt " << ref.kkt_certificate << ", route gap " << ref.route_gap
            << (cached ? " (cached)" : " (solved)") << "\n";

  const bool wants_alg3 = std::find(cfg.algorithms.begin(), cfg.algorithms.end(), 3) !=
                          cfg.algorithms.end();
  std::optional<GraphSchedule> schedule;
  if (wants_alg3) schedule = build_schedule(cfg, game.n_agents);

  json diagnostics = {{"schema_version", kSchemaVersion},
                      {"instance",
                       {{"hash", hash_hex(instance_hash(game))},
                        {"agents", game.n_agents},
                        {"decision_dim", game.decision_dim},
                        {"coupling_dim", game.coupling_dim}}},
                      {"reference", reference_json(ref, cached)},
                      {"runs", json::object()}};

  for (int algo : cfg.algorithms) {
    RunArtifacts artifacts =
        run_one(cfg, game, plan, schedule ? &*schedule : nullptr, ref, algo);
    if (algo == 3) {
      append_alg3_diagnostics(artifacts.summary, cfg, game, consts, plan, *schedule,
                              artifacts.trace);
    }
    const std::string name = "trace_" + std::to_string(algo) + ".csv";
    write_trace_csv(artifacts.trace, (out / name).string());
    diagnostics["runs"]["alg" + std::to_string(algo)] = artifacts.summary;
    const TraceRow& last = artifacts.trace.rows.back();
    std::cout << "alg " << algo << ": status " << artifacts.trace.status << ", "
              << artifacts.trace.rows.size() << " rows, final kkt " << last.kkt_residual
              << ", final residual " << last.norm_residual << "\n";
  }

  write_json(out / "diagnostics.json", diagnostics);
  write_json(out / "config.echo.json", echo_json(cfg));
  return 0;
}

std::string gamma_label(const std::string& gamma) {
  std::string label = gamma;
  label.erase(std::remove(label.begin(), label.end(), ':'), label.end());
  std::replace(label.begin(), label.end(), '.', 'p');
  return label;
}

int cmd_compare(const std::vector<CliConfig>& configs, const std::string& out_dir) {
  const std::filesystem::path out(out_dir);
  std::filesystem::create_directories(out);

  const GameInstance game = build_instance(configs.front());
  const std::uint64_t hash = instance_hash(game);
  for (std::size_t c = 1; c < configs.size(); ++c) {
    const GameInstance other = build_instance(configs[c]);
    if (instance_hash(other) != hash) {
      throw InstanceMismatch("config " + std::to_string(c + 1) +
                             " describes a different instance (hash " +
                             hash_hex(instance_hash(other)) + " vs " + hash_hex(hash) +
                             "); compare needs one shared game");
    }
  }
  const GameConstants consts = constants(game);

  bool cached = false;
  const ReferenceSolution ref =
      reference_for(configs.front(), game, out / "reference.json", cached);

  std::vector<std::pair<std::string, RunTrace>> runs;
  json summaries = json::object();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const CliConfig& cfg = configs[c];
    const StepPlan plan = plan_for(cfg, consts);
    std::optional<GraphSchedule> schedule;
    for (int algo : cfg.algorithms) {
      if (algo == 3 && !schedule) schedule = build_schedule(cfg, game.n_agents);
      std::string label = "alg" + std::to_string(algo);
      if (algo != 1) label += "_" + gamma_label(cfg.gamma);
      while (summaries.contains(label)) label += "_c" + std::to_string(c + 1);
      RunArtifacts artifacts =
          run_one(cfg, game, plan, schedule ? &*schedule : nullptr, ref, algo);
      summaries[label] = artifacts.summary;
      std::cout << label << ": status " << artifacts.trace.status << ", "
                << artifacts.trace.rows.size() << " rows, final residual "
                << artifacts.trace.rows.back().norm_residual << "\n";
      runs.emplace_back(label, std::move(artifacts.trace));
    }
  }

  std::vector<std::pair<std::string, const RunTrace*>> columns;
  columns.reserve(runs.size());
  for (const auto& [label, trace] : runs) columns.emplace_back(label, &trace);
  write_comparison_csv(columns, (out / "compare.csv").string());

  json echo = json::array();
  for (const CliConfig& cfg : configs) echo.push_back(echo_json(cfg));
  write_json(out / "config.echo.json",
             json{{"schema_version", kSchemaVersion}, {"compare", echo}});
  write_json(out / "diagnostics.json",
             json{{"schema_version", kSchemaVersion},
                  {"instance", {{"hash", hash_hex(hash)}}},
                  {"reference", reference_json(ref, cached)},
                  {"runs", summaries}});
  std::cout << "compare.csv: " << runs.size() << " aligned residual columns\n";
  return 0;
}

int emit_verify_report(const CliConfig& cfg, const std::string& suite, json report,
                       bool ok) {
  report["schema_version"] = kSchemaVersion;
  report["suite"] = suite;
  report["ok"] = ok;
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);
  write_json(out / ("verify_" + suite + ".json"), report);
  write_json(out / "config.echo.json", echo_json(cfg));
  std::cout << "verify " << suite << ": " << (ok ? "ok" : "VIOLATIONS") << "\n";
  return ok ? 0 : 3;
}

int verify_network(const CliConfig& cfg) {
  const GameInstance game = build_instance(cfg);
  const GraphSchedule schedule = build_schedule(cfg, game.n_agents);
  const MixingVariant variant = mixing_variant(cfg);

  json failures = json::array();
  double eps = 1.0;
  for (int k = 0; k < schedule.horizon; ++k) {
    const MixingMatrix mixing =
        metropolis_weights(schedule.edges_at(k), schedule.n_nodes, variant);
    const ValidationReport report =
        verify_mixing(mixing.weights, schedule.edges_at(k), mixing.epsilon);
    if (!report.ok()) {
      for (const std::string& failure : report.failures) {
        failures.push_back("slot " + std::to_string(k) + ": " + failure);
      }
    }
    eps = std::min(eps, mixing.epsilon);
  }

  const int n_pairs = cfg.verify_samples > 0 ? cfg.verify_samples : 100;
  json cert_node;
  try {
    const DecayCertificate cert =
        certify_decay(schedule, variant, eps, schedule.q_window,
                      decay_sample_pairs(schedule, n_pairs,
                                         cfg.network_seed.value_or(cfg.seed)));
    cert_node = certificate_json(cert);
    if (!cert.valid) failures.push_back("decay bound violated on sampled windows");
  } catch (const AssumptionViolated& e) {
    cert_node = json{{"valid", false}};
    failures.push_back(e.what());
  }

  const bool ok = failures.empty();
  return emit_verify_report(cfg, "network",
                            json{{"slots", schedule.horizon},
                                 {"epsilon", eps},
                                 {"decay_certificate", cert_node},
                                 {"failures", failures}},
                            ok);
}

int verify_operators(const CliConfig& cfg) {
  const GameInstance game = build_instance(cfg);
  const GameConstants consts = constants(game);
  const int n_samples = cfg.verify_samples > 0 ? cfg.verify_samples : 200;

  Preconditioner pc;
  if (cfg.alpha_scale == 1.0) {
    pc = build_preconditioner(game, consts, cfg.tau_margin);
  } else {
    const Preconditioner base = build_preconditioner(game, consts, cfg.tau_margin);
    pc = assemble_preconditioner(game, cfg.alpha_scale * base.alpha,
                                 cfg.alpha_scale * base.beta, base.tau, base.nu);
  }

  int floor_violations = 0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(preconditioner_matrix(pc));
  const double eig_margin = eig.eigenvalues()(0) - (pc.tau - 1e-9);
  if (eig_margin < 0.0) ++floor_violations;

  const auto nn = static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  const auto mm = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  SplitRng rng(cfg.seed);
  auto draw = [&rng](Eigen::Index len, double lo, double hi, const char* tag,
                     std::uint64_t t) {
    VectorXd v(len);
    for (Eigen::Index j = 0; j < len; ++j) {
      v[j] = rng.uniform(lo, hi, tag, t, static_cast<std::uint64_t>(j));
    }
    return v;
  };
  auto stack_pair = [](const VectorXd& a, const VectorXd& b) {
    VectorXd s(a.size() + b.size());
    s << a, b;
    return s;
  };

  int skew_violations = 0;
  int coco_violations = 0;
  int lip_violations = 0;
  int step_violations = 0;
  for (int t = 0; t < n_samples; ++t) {
    const auto tu = static_cast<std::uint64_t>(t);
    const StackedPoint u{draw(nn, -1.0, 1.0, "ux", tu), draw(mm, 0.0, 1.0, "ul", tu)};
    const StackedPoint v{draw(nn, -1.0, 1.0, "vx", tu), draw(mm, 0.0, 1.0, "vl", tu)};

    const VectorXd us = stack_pair(u.x, u.lambda);
    const VectorXd vs = stack_pair(v.x, v.lambda);
    const double skew = std::abs(apply_S(game, u).dot(vs) + apply_S(game, v).dot(us));
    if (skew > 1e-12 * (1.0 + us.norm() * vs.norm())) ++skew_violations;

    const VectorXd fu = pseudo_gradient(game, u.x);
    const VectorXd fv = pseudo_gradient(game, v.x);
    if ((fu - fv).dot(u.x - v.x) < consts.coco * (fu - fv).squaredNorm() - 1e-9) {
      ++coco_violations;
    }

    const VectorXd wu = draw(nn, -1.0, 1.0, "uw", tu);
    const VectorXd wv = draw(nn, -1.0, 1.0, "vw", tu);
    const VectorXd eu = extended_pseudo_gradient(game, u.x, wu);
    const VectorXd ev = extended_pseudo_gradient(game, v.x, wv);
    const double arg_dist =
        std::sqrt((u.x - v.x).squaredNorm() + (wu - wv).squaredNorm());
    if ((eu - ev).norm() > consts.lip_epg * arg_dist + 1e-9) ++lip_violations;

    const StackedPoint ru = pfb_map(game, pc, u);
    const StackedPoint rv = pfb_map(game, pc, v);
    const double d_in = phi_norm(pc, us - vs);
    const double d_out = phi_norm(pc, stack_pair(ru.x - rv.x, ru.lambda - rv.lambda));
    const double d_res =
        phi_norm(pc, stack_pair((u.x - ru.x) - (v.x - rv.x),
                                (u.lambda - ru.lambda) - (v.lambda - rv.lambda)));
    const double budget = d_in * d_in - (1.0 - pc.nu) / pc.nu * d_res * d_res + 1e-8;
    if (d_out * d_out > budget) ++step_violations;
  }

  const int total = floor_violations + skew_violations + coco_violations +
                    lip_violations + step_violations;
  return emit_verify_report(
      cfg, "operators",
      json{{"samples", n_samples},
           {"alpha_scale", cfg.alpha_scale},
           {"metric_floor_margin", eig_margin},
           {"violations",
            {{"metric_floor", floor_violations},
             {"skew", skew_violations},
             {"cocoercivity", coco_violations},
             {"aggregate_lipschitz", lip_violations},
             {"averaged_step", step_violations}}}},
      total == 0);
}

int verify_tracking(const CliConfig& cfg) {
  const GameInstance game = build_instance(cfg);
  const GameConstants consts = constants(game);
  const StepPlan plan = plan_for(cfg, consts);
  const GraphSchedule schedule = build_schedule(cfg, game.n_agents);
  const ReferenceSolution none{};

  const RunArtifacts artifacts = run_one(cfg, game, plan, &schedule, none, 3);
  double worst = 0.0;
  for (const TraceRow& row : artifacts.trace.rows) {
    worst = std::max({worst, row.inv_sigma, row.inv_y, row.inv_z});
  }
  const InvarianceGaps final_gaps = tracking_invariance(game, artifacts.trace.final_state);
  worst = std::max({worst, final_gaps.sigma_gap, final_gaps.y_gap, final_gaps.z_gap});

  const bool ok = worst <= 1e-10;
  return emit_verify_report(cfg, "tracking",
                            json{{"rows", artifacts.trace.rows.size()},
                                 {"worst_gap", worst},
                                 {"threshold", 1e-10}},
                            ok);
}

int verify_bounds(const CliConfig& cfg) {
  const GameInstance game = build_instance(cfg);
  const GameConstants consts = constants(game);
  const StepPlan plan = plan_for(cfg, consts);
  const GraphSchedule schedule = build_schedule(cfg, game.n_agents);
  const MixingVariant variant = mixing_variant(cfg);

  const double eps = min_slot_epsilon(schedule, variant);
  const int n_pairs = cfg.verify_samples > 0 ? cfg.verify_samples : 100;
  const DecayCertificate cert =
      certify_decay(schedule, variant, eps, schedule.q_window,
                    decay_sample_pairs(schedule, n_pairs,
                                       cfg.network_seed.value_or(cfg.seed)));

  const ReferenceSolution none{};
  const RunArtifacts artifacts = run_one(cfg, game, plan, &schedule, none, 3);
  const BoundInputs inputs =
      assemble_bound_inputs(game, consts, plan, cert, artifacts.trace);
  const TrackingBoundReport tracking = tracking_bound_check(artifacts.trace, inputs);
  const ShadowBoundReport shadow = shadow_bound_check(artifacts.trace, consts, plan);

  json violation_samples = json::array();
  for (std::size_t v = 0; v < tracking.violations.size() && v < 10; ++v) {
    const TrackingBoundViolation& viol = tracking.violations[v];
    violation_samples.push_back(json{{"k", viol.k},
                                     {"series", std::string(1, viol.series)},
                                     {"measured", viol.measured},
                                     {"bound", viol.bound}});
  }

  const bool ok = cert.valid && tracking.ok() && shadow.ok();
  return emit_verify_report(
      cfg, "bounds",
      json{{"decay_certificate", certificate_json(cert)},
           {"tracking",
            {{"checked", tracking.checked},
             {"violations", tracking.violations.size()},
             {"max_ratio_sigma", tracking.max_ratio_sigma},
             {"max_ratio_z", tracking.max_ratio_z},
             {"max_ratio_y", tracking.max_ratio_y},
             {"violation_samples", violation_samples}}},
           {"shadow",
            {{"checked", shadow.checked},
             {"violations", shadow.violations},
             {"max_excess", shadow.max_excess},
             {"max_ratio", shadow.max_ratio}}}},
      ok);
}

int cmd_verify(const CliConfig& cfg, const std::string& suite) {
  if (suite == "network") return verify_network(cfg);
  if (suite == "operators") return verify_operators(cfg);
  if (suite == "tracking") return verify_tracking(cfg);
  return verify_bounds(cfg);
}

int cmd_oracle(const CliConfig& cfg) {
  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  const GameInstance game = build_instance(cfg);
  bool cached = false;
  const ReferenceSolution ref = reference_for(cfg, game, out / "reference.json", cached);
  const int n_samples = cfg.verify_samples > 0 ? cfg.verify_samples : 200;
  const DeviationReport deviations = gne_deviation_check(game, ref, n_samples, cfg.seed);
  const double cap = dual_bound(game, game.slater);

  std::cout << "reference: kkt " << ref.kkt_certificate << ", route gap " << ref.route_gap
            << (cached ? " (cached)" : " (solved)") << "\n"
            << "method: " << ref.method << "\n"
            << "dual bound: " << cap << "\n"
            << "deviations: " << deviations.tested << " tested, " << deviations.skipped
            << " skipped, best improvement " << deviations.max_improvement << "\n";

  write_json(out / "config.echo.json", echo_json(cfg));
  const bool ok = deviations.max_improvement <= 1e-8;
  if (!ok) {
    std::cerr << "error: a sampled unilateral deviation improves an agent cost by "
              << deviations.max_improvement << ", above the 1e-8 equilibrium margin\n";
  }
  return ok ? 0 : 3;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InvalidParams*>(&e) != nullptr ||
      dynamic_cast<const InvalidGamma*>(&e) != nullptr ||
      dynamic_cast<const InvalidBox*>(&e) != nullptr ||
      dynamic_cast<const RangeError*>(&e) != nullptr ||
      dynamic_cast<const NotSupported*>(&e) != nullptr ||
      dynamic_cast<const DimensionMismatch*>(&e) != nullptr ||
      dynamic_cast<const InstanceMismatch*>(&e) != nullptr ||
      dynamic_cast<const InfeasibleInstance*>(&e) != nullptr ||
      dynamic_cast<const InfeasibleSet*>(&e) != nullptr ||
      dynamic_cast<const MissingReference*>(&e) != nullptr ||
      dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) {
    return 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aggregative-game equilibrium runner and verifier"};
  app.require_subcommand(1);

  struct Flags {
    std::vector<std::string> configs;
    std::string preset;
    bool paper_v = false;
    std::vector<int> algos;
    std::string gamma;
    std::uint64_t seed = 0;
    std::string out;
    double dual_cap = 0.0;
    bool unsafe_gamma = false;
  } flags;

  auto add_common = [&flags](CLI::App* cmd, bool multi_config) {
    auto* config = cmd->add_option("--config", flags.configs,
                                   "JSON experiment configuration (schema version 1)")
                       ->check(CLI::ExistingFile);
    if (!multi_config) config->expected(0, 1);
    cmd->add_option("--preset", flags.preset, "named preset")
        ->check(CLI::IsMember({"paper-v"}));
    cmd->add_flag("--paper-v", flags.paper_v, "shorthand for --preset paper-v");
    cmd->add_option("--algo", flags.algos, "algorithm selection, repeatable")
        ->check(CLI::IsMember({1, 2, 3}));
    cmd->add_option("--gamma", flags.gamma, "relaxation schedule, pow:B or const:V");
    cmd->add_option("--seed", flags.seed, "run seed");
    cmd->add_option("--out", flags.out, "output directory");
    cmd->add_option("--dual-cap", flags.dual_cap,
                    "upper box for the distributed dual projection");
    cmd->add_flag("--unsafe-gamma", flags.unsafe_gamma,
                  "bypass the relaxation-schedule validation");
  };

  CLI::App* run = app.add_subcommand("run", "solve one configuration and write traces");
  add_common(run, false);
  CLI::App* compare =
      app.add_subcommand("compare", "run several configurations on one shared instance");
  add_common(compare, true);
  CLI::App* verify = app.add_subcommand(
      "verify", "run a structural property suite; exit 3 on violations");
  std::string suite;
  verify->add_option("suite", suite, "property suite")
      ->required()
      ->check(CLI::IsMember({"network", "operators", "tracking", "bounds"}));
  add_common(verify, false);
  CLI::App* oracle =
      app.add_subcommand("oracle", "solve and cache the reference equilibrium");
  add_common(oracle, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const bool use_preset = flags.paper_v || flags.preset == "paper-v";
    auto resolve = [&](const std::string& config_path) {
      CliConfig cfg = use_preset ? preset_paper_v() : CliConfig{};
      if (!config_path.empty()) load_config_file(cfg, config_path);
      if (!flags.algos.empty()) cfg.algorithms = flags.algos;
      if (!flags.gamma.empty()) cfg.gamma = flags.gamma;
      if (flags.seed != 0) cfg.seed = flags.seed;
      if (!flags.out.empty()) cfg.out_dir = flags.out;
      if (flags.dual_cap != 0.0) cfg.dual_cap = flags.dual_cap;
      if (flags.unsafe_gamma) cfg.unsafe_gamma = true;
      validate_config(cfg);
      return cfg;
    };

    if (run->parsed()) {
      return cmd_run(resolve(flags.configs.empty() ? "" : flags.configs.front()));
    }
    if (compare->parsed()) {
      std::vector<CliConfig> configs;
      if (flags.configs.empty()) {
        configs.push_back(resolve(""));
      } else {
        for (const std::string& path : flags.configs) configs.push_back(resolve(path));
      }
      const std::string out_dir = flags.out.empty() ? configs.front().out_dir : flags.out;
      return cmd_compare(configs, out_dir);
    }
    if (verify->parsed()) {
      return cmd_verify(resolve(flags.configs.empty() ? "" : flags.configs.front()),
                        suite);
    }
    return cmd_oracle(resolve(flags.configs.empty() ? "" : flags.configs.front()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
