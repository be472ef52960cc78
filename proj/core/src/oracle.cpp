#include "gne/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "gne/algorithms.hpp"
#include "gne/diagnostics.hpp"
#include "gne/errors.hpp"
#include "gne/operators.hpp"
#include "gne/projection.hpp"
#include "gne/rng.hpp"

namespace gne {

namespace {

constexpr int kReferenceSchemaVersion = 1;

double strong_monotonicity_constant(const GameInstance& game) {
  const auto dim = static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  const VectorXd at_zero = pseudo_gradient(game, VectorXd::Zero(dim));
  MatrixXd p(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    VectorXd e = VectorXd::Zero(dim);
    e[j] = 1.0;
    p.col(j) = pseudo_gradient(game, e) - at_zero;
  }
  const MatrixXd sym = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eigs(sym);
  return eigs.eigenvalues().minCoeff();
}

VectorXd box_midpoint_start(const GameInstance& game) {
  const int n = game.decision_dim;
  VectorXd x0(static_cast<Eigen::Index>(game.n_agents) * n);
  for (int i = 0; i < game.n_agents; ++i) {
    VectorXd mid(n);
    const auto& set = game.agents[i].local_set;
    if (const auto* box = std::get_if<Box>(&set)) {
      mid = 0.5 * (box->lower + box->upper);
    } else if (const auto* bh = std::get_if<BoxHalfspace>(&set)) {
      mid = 0.5 * (bh->lower + bh->upper);
    } else {
      mid = game.agent_segment(game.slater, i);
    }
    x0.segment(static_cast<Eigen::Index>(i) * n, n) = project_local(set, mid);
  }
  return x0;
}

struct ExtragradientResult {
  VectorXd x;
  VectorXd lambda;
  int iterations = 0;
  double residual = 0.0;
};

/// Extragradient on the stacked map G(x, l) = (F(x) + C^T l, -(Cx - c)) over
/// Omega x R^m_{>=0}; two projected half-steps per iteration.
ExtragradientResult extragradient_route(const GameInstance& game, const GameConstants& consts,
                                        double tol, int max_iter) {
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;

  const double lip = consts.p_norm + std::sqrt(consts.coupling_norms.squaredNorm());
  const double eta = 0.7 / lip;

  auto stacked_map = [&](const VectorXd& x, const VectorXd& lambda) {
    VectorXd gx = pseudo_gradient(game, x);
    for (int i = 0; i < N; ++i) {
      gx.segment(static_cast<Eigen::Index>(i) * n, n) +=
          game.agents[i].coupling_block.transpose() * lambda;
    }
    const VectorXd gl = -coupling_violation(game, x);
    return std::make_pair(std::move(gx), gl);
  };
  auto project_pair = [&](const VectorXd& x, const VectorXd& lambda) {
    VectorXd px(x.size());
    for (int i = 0; i < N; ++i) {
      px.segment(static_cast<Eigen::Index>(i) * n, n) =
          project_local(game.agents[i].local_set, game.agent_segment(x, i));
    }
    return std::make_pair(std::move(px), project_nonneg(lambda));
  };

  auto [x, lambda] = project_pair(box_midpoint_start(game), VectorXd::Ones(m));
  ExtragradientResult result;
  for (int k = 0; k < max_iter; ++k) {
    result.residual = kkt_residual(game, x, lambda);
    if (result.residual <= tol) {
      result.x = x;
      result.lambda = lambda;
      result.iterations = k;
      return result;
    }
    const auto [gx, gl] = stacked_map(x, lambda);
    const auto [xh, lh] = project_pair(x - eta * gx, lambda - eta * gl);
    const auto [gxh, glh] = stacked_map(xh, lh);
    std::tie(x, lambda) = project_pair(x - eta * gxh, lambda - eta * glh);
    if (!x.allFinite() || !lambda.allFinite()) {
      throw NonFiniteIterate("extragradient produced a non-finite iterate");
    }
  }
  throw NoConvergence("extragradient route missed tolerance", x,
                      kkt_residual(game, x, lambda));
}

/// Refines a near-solution by solving the linear KKT system restricted to the
/// detected active constraints (box faces, box-halfspace cuts, coupling rows
/// with dual support). Overwrites (x, lambda) only when the refined point has
/// a strictly smaller natural residual; any classification failure, sign
/// violation, or singular system leaves the inputs untouched.
bool active_set_polish(const GameInstance& game, VectorXd& x, VectorXd& lambda) {
  if (!game.quadratic) return false;
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const int m = game.coupling_dim;
  const auto dim = static_cast<Eigen::Index>(N) * n;

  const VectorXd b0 = pseudo_gradient(game, VectorXd::Zero(dim));
  MatrixXd p(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    VectorXd e = VectorXd::Zero(dim);
    e[j] = 1.0;
    p.col(j) = pseudo_gradient(game, e) - b0;
  }

  MatrixXd c_all = MatrixXd::Zero(m, dim);
  for (int i = 0; i < N; ++i) {
    c_all.middleCols(static_cast<Eigen::Index>(i) * n, n) = game.agents[i].coupling_block;
  }
  VectorXd c_off = VectorXd::Zero(m);
  for (int i = 0; i < N; ++i) c_off += game.agents[i].coupling_offset;

  VectorXd pin_value = VectorXd::Zero(dim);
  std::vector<bool> pinned(static_cast<std::size_t>(dim), false);
  std::vector<int> active_halfspace;
  for (int i = 0; i < N; ++i) {
    const auto& set = game.agents[i].local_set;
    const VectorXd* lower = nullptr;
    const VectorXd* upper = nullptr;
    const BoxHalfspace* bh = nullptr;
    if (const auto* box = std::get_if<Box>(&set)) {
      lower = &box->lower;
      upper = &box->upper;
    } else if ((bh = std::get_if<BoxHalfspace>(&set)) != nullptr) {
      lower = &bh->lower;
      upper = &bh->upper;
    } else {
      return false;
    }
    const VectorXd xi = game.agent_segment(x, i);
    for (int j = 0; j < n; ++j) {
      const Eigen::Index g = static_cast<Eigen::Index>(i) * n + j;
      const double atol = 1e-7 * (1.0 + std::abs((*upper)[j] - (*lower)[j]));
      if (xi[j] <= (*lower)[j] + atol) {
        pinned[static_cast<std::size_t>(g)] = true;
        pin_value[g] = (*lower)[j];
      } else if (xi[j] >= (*upper)[j] - atol) {
        pinned[static_cast<std::size_t>(g)] = true;
        pin_value[g] = (*upper)[j];
      }
    }
    if (bh != nullptr &&
        bh->normal.dot(xi) >= bh->offset - 1e-7 * (1.0 + std::abs(bh->offset))) {
      active_halfspace.push_back(i);
    }
  }

  const double lam_tol = 1e-6 * std::max(1.0, lambda.maxCoeff());
  std::vector<int> active_row;
  for (int r = 0; r < m; ++r) {
    if (lambda[r] > lam_tol) active_row.push_back(r);
  }

  std::vector<Eigen::Index> free_of_global(static_cast<std::size_t>(dim), -1);
  Eigen::Index nf = 0;
  for (Eigen::Index g = 0; g < dim; ++g) {
    if (!pinned[static_cast<std::size_t>(g)]) free_of_global[static_cast<std::size_t>(g)] = nf++;
  }
  const auto na = static_cast<Eigen::Index>(active_row.size());
  const auto nh = static_cast<Eigen::Index>(active_halfspace.size());
  const Eigen::Index total = nf + na + nh;
  if (total == 0) return false;

  MatrixXd g_rows = MatrixXd::Zero(na + nh, dim);
  VectorXd g_rhs(na + nh);
  for (Eigen::Index a = 0; a < na; ++a) {
    g_rows.row(a) = c_all.row(active_row[static_cast<std::size_t>(a)]);
    g_rhs[a] = c_off[active_row[static_cast<std::size_t>(a)]];
  }
  for (Eigen::Index h = 0; h < nh; ++h) {
    const int i = active_halfspace[static_cast<std::size_t>(h)];
    const auto& bh = std::get<BoxHalfspace>(game.agents[i].local_set);
    g_rows.row(na + h).segment(static_cast<Eigen::Index>(i) * n, n) = bh.normal.transpose();
    g_rhs[na + h] = bh.offset;
  }

  MatrixXd kkt = MatrixXd::Zero(total, total);
  VectorXd rhs = VectorXd::Zero(total);
  VectorXd pinned_part = VectorXd::Zero(dim);
  for (Eigen::Index g = 0; g < dim; ++g) {
    if (pinned[static_cast<std::size_t>(g)]) pinned_part[g] = pin_value[g];
  }
  const VectorXd p_pin = p * pinned_part;
  const VectorXd g_pin = g_rows * pinned_part;
  for (Eigen::Index g = 0; g < dim; ++g) {
    const Eigen::Index f = free_of_global[static_cast<std::size_t>(g)];
    if (f < 0) continue;
    for (Eigen::Index g2 = 0; g2 < dim; ++g2) {
      const Eigen::Index f2 = free_of_global[static_cast<std::size_t>(g2)];
      if (f2 >= 0) kkt(f, f2) = p(g, g2);
    }
    for (Eigen::Index a = 0; a < na + nh; ++a) {
      kkt(f, nf + a) = g_rows(a, g);
      kkt(nf + a, f) = g_rows(a, g);
    }
    rhs[f] = -b0[g] - p_pin[g];
  }
  rhs.segment(nf, na + nh) = g_rhs - g_pin;

  Eigen::FullPivLU<MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) return false;

  const auto unpack_x = [&](const VectorXd& s) {
    VectorXd xr = pinned_part;
    for (Eigen::Index g = 0; g < dim; ++g) {
      const Eigen::Index f = free_of_global[static_cast<std::size_t>(g)];
      if (f >= 0) xr[g] = s[f];
    }
    return xr;
  };
  const auto unpack_lambda = [&](const VectorXd& s) {
    VectorXd lr = VectorXd::Zero(m);
    for (Eigen::Index a = 0; a < na; ++a) {
      lr[active_row[static_cast<std::size_t>(a)]] = s[nf + a];
    }
    return lr;
  };

  // The saddle system can be ill-conditioned enough that one plain solve
  // leaves 1e-10-scale wobble in the multipliers; refining against residuals
  // recomputed from the game itself restores backward exactness at the point.
  for (int pass = 0; pass < 3; ++pass) {
    const VectorXd xr = unpack_x(sol);
    VectorXd stat = pseudo_gradient(game, xr) + c_all.transpose() * unpack_lambda(sol);
    for (Eigen::Index h = 0; h < nh; ++h) {
      const int i = active_halfspace[static_cast<std::size_t>(h)];
      const auto& bh = std::get<BoxHalfspace>(game.agents[i].local_set);
      stat.segment(static_cast<Eigen::Index>(i) * n, n) += sol[nf + na + h] * bh.normal;
    }
    VectorXd resid(total);
    for (Eigen::Index g = 0; g < dim; ++g) {
      const Eigen::Index f = free_of_global[static_cast<std::size_t>(g)];
      if (f >= 0) resid[f] = stat[g];
    }
    resid.segment(nf, na + nh) = g_rows * xr - g_rhs;
    const VectorXd delta = lu.solve(resid);
    if (!delta.allFinite()) break;
    sol -= delta;
  }

  VectorXd x_new = unpack_x(sol);
  VectorXd lambda_new = unpack_lambda(sol);
  if ((lambda_new.array() < -1e-9).any()) return false;
  for (Eigen::Index h = 0; h < nh; ++h) {
    if (sol[nf + na + h] < -1e-9) return false;
  }
  lambda_new = lambda_new.cwiseMax(0.0);
  for (int i = 0; i < N; ++i) {
    x_new.segment(static_cast<Eigen::Index>(i) * n, n) =
        project_local(game.agents[i].local_set, game.agent_segment(x_new, i));
  }
  if (!x_new.allFinite()) return false;

  if (kkt_residual(game, x_new, lambda_new) >= kkt_residual(game, x, lambda)) return false;
  x = x_new;
  lambda = lambda_new;
  return true;
}

nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VectorXd vector_from_json(const nlohmann::json& arr) {
  VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i];
  return v;
}

}  // namespace

ReferenceSolution solve_reference(const GameInstance& game, double tol, int max_iter) {
  const GameConstants consts = constants(game);
  if (game.quadratic) {
    const double mu = strong_monotonicity_constant(game);
    if (mu <= 0.0) {
      throw AssumptionViolated("game map is not strongly monotone; equilibrium may not be unique");
    }
  }

  const StepPlan plan = make_step_plan(consts, 1.0, ConstantGamma{1.0});
  const VectorXd lambda0 = VectorXd::Zero(game.coupling_dim);
  const RunTrace trace =
      run_algorithm1(game, plan, game.slater, lambda0, max_iter, tol);
  if (trace.status != "kkt_tol") {
    throw NoConvergence("projected-gradient route missed tolerance", trace.final_state.x,
                        trace.rows.empty() ? std::nan("") : trace.rows.back().kkt_residual);
  }
  const VectorXd& x_a = trace.final_state.x;
  const VectorXd& lambda_a = trace.final_state.lambda;

  const ExtragradientResult cross = extragradient_route(game, consts, tol, max_iter);

  const double gap = (x_a - cross.x).norm() / std::max(1.0, x_a.norm());
  if (gap > 10.0 * std::max(tol, 1e-12)) {
    throw NoConvergence("independent routes disagree on the equilibrium", x_a, gap);
  }

  ReferenceSolution ref;
  ref.x_star = x_a;
  ref.lambda_star = lambda_a;
  ref.method = "projected-gradient/extragradient cross-check";
  if (active_set_polish(game, ref.x_star, ref.lambda_star)) {
    ref.method += ", active-set polish";
  }
  ref.kkt_certificate = kkt_residual(game, ref.x_star, ref.lambda_star);
  ref.route_gap = gap;
  ref.iterations = static_cast<int>(trace.rows.size()) + cross.iterations;
  return ref;
}

double dual_bound(const GameInstance& game, const VectorXd& slater, double extra) {
  const VectorXd viol = coupling_violation(game, slater);
  const double slack = -viol.maxCoeff();
  if (slack <= 0.0) {
    throw NotStrictlyFeasible("dual bound needs a point with positive coupling slack");
  }
  const GameConstants consts = constants(game);
  const double radius = stacked_omega_bound(game);
  const auto dim = static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  const double lin_norm = pseudo_gradient(game, VectorXd::Zero(dim)).norm();
  return (consts.p_norm * radius + lin_norm) * (radius + slater.norm()) / slack + extra;
}

DeviationReport gne_deviation_check(const GameInstance& game, const ReferenceSolution& ref,
                                    int n_samples, std::uint64_t seed) {
  const int N = game.n_agents;
  const int n = game.decision_dim;
  const VectorXd xbar = decision_average(game, ref.x_star);
  const VectorXd viol_base = coupling_violation(game, ref.x_star);
  const VectorXd feas_cap = viol_base.cwiseMax(0.0).array() + 1e-12;

  SplitRng rng(game.seed ^ seed);
  DeviationReport report;
  for (int t = 0; t < n_samples; ++t) {
    const int i = static_cast<int>(rng.below(static_cast<std::uint64_t>(N), "agent", t, 0));
    const auto& set = game.agents[i].local_set;
    const VectorXd* lower = nullptr;
    const VectorXd* upper = nullptr;
    if (const auto* box = std::get_if<Box>(&set)) {
      lower = &box->lower;
      upper = &box->upper;
    } else if (const auto* bh = std::get_if<BoxHalfspace>(&set)) {
      lower = &bh->lower;
      upper = &bh->upper;
    }
    if (lower == nullptr || !lower->allFinite() || !upper->allFinite()) {
      ++report.skipped;
      continue;
    }

    VectorXd z(n);
    for (int j = 0; j < n; ++j) {
      z[j] = rng.uniform((*lower)[j], (*upper)[j], "z", t, j);
    }
    z = project_local(set, z);

    const VectorXd xi_star = game.agent_segment(ref.x_star, i);
    const VectorXd dir = z - xi_star;
    double scale = 1.0;
    bool feasible = false;
    while (scale > 1e-16) {
      const VectorXd shift = game.agents[i].coupling_block * (scale * dir);
      if (((viol_base + shift).array() <= feas_cap.array()).all()) {
        feasible = true;
        break;
      }
      scale *= 0.5;
    }
    if (!feasible) {
      ++report.skipped;
      continue;
    }

    const VectorXd zi = xi_star + scale * dir;
    const VectorXd xbar_dev = xbar + (zi - xi_star) / N;
    const double base_cost = agent_cost(game, i, xi_star, xbar);
    const double dev_cost = agent_cost(game, i, zi, xbar_dev);
    report.max_improvement = std::max(report.max_improvement, base_cost - dev_cost);
    ++report.tested;
  }
  return report;
}

std::uint64_t instance_hash(const GameInstance& game) {
  return fnv1a(game_to_json(game));
}

void save_reference(const std::string& path, const GameInstance& game,
                    const ReferenceSolution& ref) {
  nlohmann::json doc;
  doc["schema_version"] = kReferenceSchemaVersion;
  doc["instance_hash"] = instance_hash(game);
  doc["x_star"] = vector_to_json(ref.x_star);
  doc["lambda_star"] = vector_to_json(ref.lambda_star);
  doc["kkt_certificate"] = ref.kkt_certificate;
  doc["route_gap"] = ref.route_gap;
  doc["method"] = ref.method;
  doc["iterations"] = ref.iterations;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open reference file for writing: " + path);
  out << doc.dump(2) << '\n';
}

ReferenceSolution load_reference(const std::string& path, const GameInstance& game) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingReference("no reference file at " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw MissingReference("unreadable reference file " + path + ": " + e.what());
  }
  if (doc.value("schema_version", -1) != kReferenceSchemaVersion) {
    throw MissingReference("unsupported reference schema in " + path);
  }
  if (doc.at("instance_hash").get<std::uint64_t>() != instance_hash(game)) {
    throw InstanceMismatch("reference file " + path + " was computed for a different instance");
  }
  ReferenceSolution ref;
  ref.x_star = vector_from_json(doc.at("x_star"));
  ref.lambda_star = vector_from_json(doc.at("lambda_star"));
  ref.kkt_certificate = doc.at("kkt_certificate").get<double>();
  ref.route_gap = doc.value("route_gap", 0.0);
  ref.method = doc.at("method").get<std::string>();
  ref.iterations = doc.at("iterations").get<int>();
  return ref;
}

}  // namespace gne
