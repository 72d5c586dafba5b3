#include <benchmark/benchmark.h>

#include <vector>

#include "dualfem/experiments.hpp"
#include "dualfem/solver.hpp"

using namespace dualfem;

namespace {

ExperimentConfig lshape(int levels) {
  ExperimentConfig c = preset("plaplace");
  c.levels = levels;
  c.grade_depth = 0;
  return c;
}

ExperimentConfig channel(int levels) {
  ExperimentConfig c = preset("pstokes");
  c.levels = levels;
  c.grade_depth = 0;
  return c;
}

void BM_AssembleStiffness(benchmark::State& state) {
  const auto config = lshape(static_cast<int>(state.range(0)));
  const DiscreteProblem problem = build_problem(config, build_mesh(config));
  const std::vector<double> weights(problem.space().mesh().triangle_count(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(assemble_weighted_stiffness(problem.space(), weights));
  state.counters["triangles"] = static_cast<double>(weights.size());
}
BENCHMARK(BM_AssembleStiffness)->DenseRange(4, 7)->Unit(benchmark::kMillisecond);

void BM_SolveSpd(benchmark::State& state) {
  const auto config = lshape(static_cast<int>(state.range(0)));
  const DiscreteProblem problem = build_problem(config, build_mesh(config));
  const std::vector<double> weights(problem.space().mesh().triangle_count(), 1.0);
  const SparseMatrix a = assemble_weighted_stiffness(problem.space(), weights);
  LinearSolver solver;
  for (auto _ : state) benchmark::DoNotOptimize(solver.solve_spd(a, problem.load_vector()));
  state.counters["dofs"] = static_cast<double>(a.rows());
}
BENCHMARK(BM_SolveSpd)->DenseRange(4, 7)->Unit(benchmark::kMillisecond);

void BM_SolveSaddle(benchmark::State& state) {
  const auto config = channel(static_cast<int>(state.range(0)));
  const DiscreteProblem problem = build_problem(config, build_mesh(config));
  const std::vector<double> weights(problem.space().mesh().triangle_count(), 1.0);
  const SparseMatrix a = assemble_weighted_stiffness(problem.space(), weights);
  const Vector rhs = Vector::Ones(a.rows());
  LinearSolver solver;
  for (auto _ : state) benchmark::DoNotOptimize(solver.solve_saddle(a, problem.constraint(), rhs));
  state.counters["dofs"] = static_cast<double>(a.rows());
}
BENCHMARK(BM_SolveSaddle)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);

void BM_KacanovStep(benchmark::State& state) {
  const auto config = lshape(static_cast<int>(state.range(0)));
  const DiscreteProblem problem = build_problem(config, build_mesh(config));
  const NFunction model = energy_model(config);
  const Vector u = Vector::Zero(problem.space().dof_count());
  LinearSolver solver;
  for (auto _ : state) benchmark::DoNotOptimize(kacanov_step(model, problem, u, &solver));
}
BENCHMARK(BM_KacanovStep)->DenseRange(4, 7)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
