#include "gne/game.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gne/rng.hpp"

namespace gne {

namespace {

using json = nlohmann::json;

void check_dim(const GameInstance& game, const VectorXd& x, const char* what) {
  const auto expected =
      static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  if (x.size() != expected) {
    throw DimensionMismatch(std::string(what) + ": expected length " +
                            std::to_string(expected) + ", got " +
                            std::to_string(x.size()));
  }
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
  return m;
}

json vector_to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

VectorXd vector_from_json(const json& arr) {
  VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

json set_to_json(const LocalSetDesc& set) {
  json j;
  if (const auto* box = std::get_if<Box>(&set)) {
    j["variant"] = "box";
    j["lower"] = vector_to_json(box->lower);
    j["upper"] = vector_to_json(box->upper);
  } else if (const auto* bh = std::get_if<BoxHalfspace>(&set)) {
    j["variant"] = "box_halfspace";
    j["lower"] = vector_to_json(bh->lower);
    j["upper"] = vector_to_json(bh->upper);
    j["normal"] = vector_to_json(bh->normal);
    j["offset"] = bh->offset;
  } else {
    const auto& poly = std::get<Polyhedron>(set);
    j["variant"] = "polyhedron";
    j["rows_a"] = matrix_to_json(poly.rows_a);
    j["rows_b"] = vector_to_json(poly.rows_b);
    j["strict_point"] = vector_to_json(poly.strict_point);
  }
  return j;
}

LocalSetDesc set_from_json(const json& j) {
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "box") {
    return Box{vector_from_json(j.at("lower")), vector_from_json(j.at("upper"))};
  }
  if (variant == "box_halfspace") {
    return BoxHalfspace{vector_from_json(j.at("lower")), vector_from_json(j.at("upper")),
                        vector_from_json(j.at("normal")), j.at("offset").get<double>()};
  }
  return Polyhedron{matrix_from_json(j.at("rows_a")), vector_from_json(j.at("rows_b")),
                    vector_from_json(j.at("strict_point"))};
}

}  // namespace

GameInstance build_cournot(const CournotParams& params, std::uint64_t seed) {
  const int N = params.n_agents;
  const int m = params.n_markets;
  if (N < 1 || m < 1) throw InvalidParams("build_cournot: need n_agents >= 1 and n_markets >= 1");
  auto check_interval = [](const Interval& iv, const char* name) {
    if (!(iv.lo <= iv.hi)) {
      throw InvalidParams(std::string("build_cournot: invalid range for ") + name);
    }
  };
  check_interval(params.a, "a");
  check_interval(params.b, "b");
  check_interval(params.u, "u");
  check_interval(params.d, "d");
  if (!(params.r.lo <= params.r.hi)) throw InvalidParams("build_cournot: invalid range for r");
  if (params.a.lo <= 0.0) throw InvalidParams("build_cournot: a range must be strictly positive");

  SplitRng rng(seed);
  const int n = 2 * m;

  MatrixXd a_draw(N, m), u_draw(N, m), b_draw(N, m);
  for (int i = 0; i < N; ++i) {
    for (int l = 0; l < m; ++l) {
      a_draw(i, l) = rng.uniform(params.a.lo, params.a.hi, "a", i, l);
      b_draw(i, l) = rng.uniform(params.b.lo, params.b.hi, "b", i, l);
      u_draw(i, l) = rng.uniform(params.u.lo, params.u.hi, "u", i, l);
    }
  }
  VectorXd d(m), r(m);
  for (int l = 0; l < m; ++l) {
    d[l] = rng.uniform(params.d.lo, params.d.hi, "d", l);
    if (params.r.relative_to_demand) {
      r[l] = rng.uniform(params.r.lo * d[l], params.r.hi * d[l], "r", l);
    } else {
      r[l] = rng.uniform(params.r.lo, params.r.hi, "r", l);
    }
  }

  GameInstance game;
  game.n_agents = N;
  game.decision_dim = n;
  game.coupling_dim = 2 * m;
  game.seed = seed;
  game.kind = "cournot";
  game.params = params;
  game.quadratic = true;
  game.agg_coupling = MatrixXd::Zero(n, n);
  for (int l = 0; l < m; ++l) game.agg_coupling(m + l, m + l) = 1.0;

  game.agents.reserve(N);
  for (int i = 0; i < N; ++i) {
    AgentSpec ag;
    ag.quad_matrix = MatrixXd::Zero(n, n);
    for (int l = 0; l < m; ++l) ag.quad_matrix(l, l) = a_draw(i, l);
    ag.lin_vector = VectorXd::Zero(n);
    for (int l = 0; l < m; ++l) {
      ag.lin_vector[l] = b_draw(i, l);
      ag.lin_vector[m + l] = -d[l];
    }
    ag.coupling_block = MatrixXd::Zero(2 * m, n);
    for (int l = 0; l < m; ++l) {
      ag.coupling_block(l, m + l) = 1.0;
      ag.coupling_block(m + l, m + l) = -1.0;
    }
    ag.coupling_offset = VectorXd(2 * m);
    for (int l = 0; l < m; ++l) {
      ag.coupling_offset[l] = r[l] / N;
      ag.coupling_offset[m + l] = -d[l] / N;
    }
    const double s_cap = u_draw.row(i).sum();
    BoxHalfspace set;
    set.lower = VectorXd::Zero(n);
    set.upper = VectorXd(n);
    for (int l = 0; l < m; ++l) {
      set.upper[l] = u_draw(i, l);
      set.upper[m + l] = s_cap;
    }
    set.normal = VectorXd(n);
    set.normal.head(m).setConstant(-1.0);
    set.normal.tail(m).setConstant(1.0);
    set.offset = 0.0;
    ag.local_set = std::move(set);
    game.agents.push_back(std::move(ag));
  }

  // Strictly feasible stacked point: split total sales t_l = (d_l + min(r_l,
  // total capacity_l))/2 evenly, with production covering each agent's sales.
  VectorXd total_u = u_draw.colwise().sum().transpose();
  VectorXd t(m);
  for (int l = 0; l < m; ++l) {
    const double cap = std::min(r[l], total_u[l]);
    if (!(cap > d[l])) {
      throw InfeasibleInstance(
          "build_cournot: no strict coupling slack in market " + std::to_string(l) +
          " (capacity " + std::to_string(cap) + " vs demand " + std::to_string(d[l]) + ")");
    }
    t[l] = 0.5 * (d[l] + cap);
  }
  game.slater = VectorXd::Zero(static_cast<Eigen::Index>(N) * n);
  for (int i = 0; i < N; ++i) {
    for (int l = 0; l < m; ++l) {
      const double s_il = t[l] / N;
      const double g_il = std::min(u_draw(i, l), 2.0 * s_il);
      if (!(g_il >= s_il)) {
        throw InfeasibleInstance("build_cournot: agent " + std::to_string(i) +
                                 " cannot cover its sales share in market " +
                                 std::to_string(l));
      }
      game.slater[static_cast<Eigen::Index>(i) * n + l] = g_il;
      game.slater[static_cast<Eigen::Index>(i) * n + m + l] = s_il;
    }
  }
  const VectorXd slack = coupling_violation(game, game.slater);
  if ((slack.array() >= 0.0).any()) {
    throw InfeasibleInstance("build_cournot: constructed point lacks strict slack");
  }
  return game;
}

VectorXd decision_average(const GameInstance& game, const VectorXd& x) {
  check_dim(game, x, "decision_average");
  VectorXd avg = VectorXd::Zero(game.decision_dim);
  for (int i = 0; i < game.n_agents; ++i) avg += game.agent_segment(x, i);
  return avg / game.n_agents;
}

VectorXd pseudo_gradient(const GameInstance& game, const VectorXd& x) {
  check_dim(game, x, "pseudo_gradient");
  const VectorXd xbar = decision_average(game, x);
  VectorXd out(x.size());
  const double invN = 1.0 / game.n_agents;
  for (int i = 0; i < game.n_agents; ++i) {
    const VectorXd xi = game.agent_segment(x, i);
    VectorXd gi;
    if (game.quadratic) {
      gi = 2.0 * game.agents[i].quad_matrix * xi + game.agents[i].lin_vector +
           game.agg_coupling * xbar + invN * (game.agg_coupling * xi);
    } else {
      if (!game.grad_callback) throw NotSupported("pseudo_gradient: missing gradient callback");
      gi = game.grad_callback(i, xi, xbar);
    }
    out.segment(static_cast<Eigen::Index>(i) * game.decision_dim, game.decision_dim) = gi;
  }
  return out;
}

VectorXd extended_pseudo_gradient(const GameInstance& game, const VectorXd& v,
                                  const VectorXd& w) {
  check_dim(game, v, "extended_pseudo_gradient (v)");
  check_dim(game, w, "extended_pseudo_gradient (w)");
  VectorXd out(v.size());
  const double invN = 1.0 / game.n_agents;
  for (int i = 0; i < game.n_agents; ++i) {
    const VectorXd vi = game.agent_segment(v, i);
    const VectorXd wi = game.agent_segment(w, i);
    VectorXd gi;
    if (game.quadratic) {
      gi = (2.0 * game.agents[i].quad_matrix * vi + invN * (game.agg_coupling * vi)) +
           game.agg_coupling * wi + game.agents[i].lin_vector;
    } else {
      if (!game.grad_callback) {
        throw NotSupported("extended_pseudo_gradient: missing gradient callback");
      }
      gi = game.grad_callback(i, vi, wi);
    }
    out.segment(static_cast<Eigen::Index>(i) * game.decision_dim, game.decision_dim) = gi;
  }
  return out;
}

GameConstants constants(const GameInstance& game) {
  if (!game.quadratic) {
    throw NotSupported("constants: non-quadratic game; supply constants explicitly");
  }
  const auto dim = static_cast<Eigen::Index>(game.n_agents) * game.decision_dim;
  const VectorXd f0 = pseudo_gradient(game, VectorXd::Zero(dim));
  auto apply_p = [&game, &f0](const VectorXd& v) -> VectorXd {
    return pseudo_gradient(game, v) - f0;
  };

  GameConstants out;
  // P is symmetric PSD for shared diagonal agg_coupling, so the top eigenvalue
  // of the map itself is the spectral norm.
  out.p_norm = spectral_norm_sym(apply_p, dim);
  out.coco = 1.0 / out.p_norm;
  out.delta = std::min(1.0, out.coco);
  out.tau_min = 1.0 / (2.0 * out.delta);

  // Jacobian of (v, w) -> F(v, w) is [M, D] with M = 2A + D/N, D = I x Delta;
  // its operator norm is sqrt(lambda_max(M M' + D D')).
  const double invN = 1.0 / game.n_agents;
  auto apply_jjt = [&game, invN](const VectorXd& z) -> VectorXd {
    VectorXd out_v(z.size());
    for (int i = 0; i < game.n_agents; ++i) {
      const VectorXd zi = game.agent_segment(z, i);
      const MatrixXd& delta = game.agg_coupling;
      const VectorXd mz = 2.0 * game.agents[i].quad_matrix * zi + invN * (delta * zi);
      const VectorXd mmz =
          2.0 * game.agents[i].quad_matrix * mz + invN * (delta * mz);
      out_v.segment(static_cast<Eigen::Index>(i) * game.decision_dim,
                    game.decision_dim) = mmz + delta * (delta * zi);
    }
    return out_v;
  };
  out.lip_epg = std::sqrt(std::max(0.0, spectral_norm_sym(apply_jjt, dim)));

  out.coupling_norms = VectorXd(game.n_agents);
  for (int i = 0; i < game.n_agents; ++i) {
    out.coupling_norms[i] = spectral_norm(game.agents[i].coupling_block);
  }
  out.coupling_norm_avg = out.coupling_norms.mean();
  return out;
}

VectorXd coupling_violation(const GameInstance& game, const VectorXd& x) {
  check_dim(game, x, "coupling_violation");
  VectorXd out = VectorXd::Zero(game.coupling_dim);
  for (int i = 0; i < game.n_agents; ++i) {
    out += game.agents[i].coupling_block * game.agent_segment(x, i) -
           game.agents[i].coupling_offset;
  }
  return out;
}

double agent_cost(const GameInstance& game, int i, const VectorXd& xi,
                  const VectorXd& xbar) {
  if (i < 0 || i >= game.n_agents) throw RangeError("agent_cost: agent index out of range");
  if (xi.size() != game.decision_dim || xbar.size() != game.decision_dim) {
    throw DimensionMismatch("agent_cost: bad decision dimension");
  }
  if (!game.quadratic) {
    if (!game.cost_callback) throw NotSupported("agent_cost: missing cost callback");
    return game.cost_callback(i, xi, xbar);
  }
  return xi.dot(game.agents[i].quad_matrix * xi) + game.agents[i].lin_vector.dot(xi) +
         (game.agg_coupling * xbar).dot(xi);
}

std::string game_to_json(const GameInstance& game) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = game.kind;
  j["seed"] = game.seed;
  j["n_agents"] = game.n_agents;
  j["decision_dim"] = game.decision_dim;
  j["coupling_dim"] = game.coupling_dim;
  j["agg_coupling"] = matrix_to_json(game.agg_coupling);
  j["slater"] = vector_to_json(game.slater);
  if (game.kind == "cournot") {
    const auto& p = game.params;
    j["params"] = {
        {"n_agents", p.n_agents},
        {"n_markets", p.n_markets},
        {"a", {p.a.lo, p.a.hi}},
        {"b", {p.b.lo, p.b.hi}},
        {"u", {p.u.lo, p.u.hi}},
        {"d", {p.d.lo, p.d.hi}},
        {"r", {{"relative_to_demand", p.r.relative_to_demand}, {"lo", p.r.lo}, {"hi", p.r.hi}}},
    };
  }
  json agents = json::array();
  for (const auto& ag : game.agents) {
    json a;
    a["quad_matrix"] = matrix_to_json(ag.quad_matrix);
    a["lin_vector"] = vector_to_json(ag.lin_vector);
    a["coupling_block"] = matrix_to_json(ag.coupling_block);
    a["coupling_offset"] = vector_to_json(ag.coupling_offset);
    a["local_set"] = set_to_json(ag.local_set);
    agents.push_back(std::move(a));
  }
  j["agents"] = std::move(agents);
  return j.dump(2);
}

GameInstance game_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("schema_version").get<int>() != 1) {
    throw InvalidParams("game_from_json: unknown schema version");
  }
  GameInstance game;
  game.kind = j.at("kind").get<std::string>();
  game.seed = j.at("seed").get<std::uint64_t>();
  game.n_agents = j.at("n_agents").get<int>();
  game.decision_dim = j.at("decision_dim").get<int>();
  game.coupling_dim = j.at("coupling_dim").get<int>();
  game.agg_coupling = matrix_from_json(j.at("agg_coupling"));
  game.slater = vector_from_json(j.at("slater"));
  game.quadratic = true;
  if (j.contains("params")) {
    const auto& p = j.at("params");
    game.params.n_agents = p.at("n_agents").get<int>();
    game.params.n_markets = p.at("n_markets").get<int>();
    auto iv = [&p](const char* name) {
      return Interval{p.at(name)[0].get<double>(), p.at(name)[1].get<double>()};
    };
    game.params.a = iv("a");
    game.params.b = iv("b");
    game.params.u = iv("u");
    game.params.d = iv("d");
    game.params.r.relative_to_demand = p.at("r").at("relative_to_demand").get<bool>();
    game.params.r.lo = p.at("r").at("lo").get<double>();
    game.params.r.hi = p.at("r").at("hi").get<double>();
  }
  for (const auto& a : j.at("agents")) {
    AgentSpec ag;
    ag.quad_matrix = matrix_from_json(a.at("quad_matrix"));
    ag.lin_vector = vector_from_json(a.at("lin_vector"));
    ag.coupling_block = matrix_from_json(a.at("coupling_block"));
    ag.coupling_offset = vector_from_json(a.at("coupling_offset"));
    ag.local_set = set_from_json(a.at("local_set"));
    game.agents.push_back(std::move(ag));
  }
  return game;
}

}  // namespace gne
