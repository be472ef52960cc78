// Microbenchmarks for the inner-loop primitives: the projected
// forward-backward step, the box-halfspace projection, and the mixing
// transition product.
#include <utility>
#include <vector>

#include <benchmark/benchmark.h>

#include "gne/algorithms.hpp"
#include "gne/game.hpp"
#include "gne/network.hpp"
#include "gne/operators.hpp"
#include "gne/projection.hpp"
#include "gne/rng.hpp"

namespace {

using namespace gne;

GameInstance cournot(int agents, int markets) {
  CournotParams params;
  params.n_agents = agents;
  params.n_markets = markets;
  return build_cournot(params, 1);
}

void BM_PfbMap(benchmark::State& state) {
  const GameInstance game = cournot(static_cast<int>(state.range(0)), 10);
  const GameConstants consts = constants(game);
  const Preconditioner pc = build_preconditioner(game, consts, 0.05);
  const auto dual_len = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  StackedPoint point{game.slater, VectorXd::Zero(dual_len)};
  for (auto _ : state) {
    point = pfb_map(game, pc, point);
    benchmark::DoNotOptimize(point.x.data());
  }
}
BENCHMARK(BM_PfbMap)->Arg(5)->Arg(20)->Arg(80);

void BM_BoxHalfspaceProjection(benchmark::State& state) {
  const auto dim = static_cast<Eigen::Index>(state.range(0));
  SplitRng rng(7);
  BoxHalfspace set;
  set.lower = VectorXd::Zero(dim);
  set.upper = VectorXd::Constant(dim, 100.0);
  set.normal = VectorXd(dim);
  VectorXd y(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const auto ju = static_cast<std::uint64_t>(j);
    set.normal[j] = j < dim / 2 ? -1.0 : 1.0;
    y[j] = rng.uniform(-50.0, 150.0, "y", ju);
  }
  for (auto _ : state) {
    VectorXd p = project_local(set, y);
    benchmark::DoNotOptimize(p.data());
  }
}
BENCHMARK(BM_BoxHalfspaceProjection)->Arg(20)->Arg(200)->Arg(2000);

void BM_TransitionProduct(benchmark::State& state) {
  const int span = static_cast<int>(state.range(0));
  const GraphSchedule schedule = generate_schedule(SmallWorld{4}, 20, span + 1, 1);
  for (auto _ : state) {
    MatrixXd product =
        transition_matrix(schedule, MixingVariant::SafeDiagonal, span, 0);
    benchmark::DoNotOptimize(product.data());
  }
}
BENCHMARK(BM_TransitionProduct)->Arg(10)->Arg(100)->Arg(400);

void BM_Algorithm3Iteration(benchmark::State& state) {
  const GameInstance game = cournot(20, 10);
  const GameConstants consts = constants(game);
  const StepPlan plan = make_step_plan(consts, 0.05, PowerLaw{0.51});
  const GraphSchedule schedule = generate_schedule(SmallWorld{4}, game.n_agents, 64, 1);
  const auto dual_len = static_cast<Eigen::Index>(game.n_agents) * game.coupling_dim;
  const int chunk = 32;
  for (auto _ : state) {
    RunTrace trace = run_algorithm3(game, plan, &schedule, MixingVariant::SafeDiagonal,
                                    game.slater, VectorXd::Zero(dual_len), chunk);
    benchmark::DoNotOptimize(trace.rows.data());
  }
  state.SetItemsProcessed(state.iterations() * chunk);
}
BENCHMARK(BM_Algorithm3Iteration);

}  // namespace

BENCHMARK_MAIN();
