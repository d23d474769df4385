#include <benchmark/benchmark.h>

#include "kesten/branching.hpp"
#include "kesten/spectral.hpp"
#include "kesten/tailkit.hpp"

using namespace kesten;

namespace {

MatrixLaw reference_law() {
  Matrix a(2, 2), b(2, 2);
  a << 0.009, 0.003, 0.002, 0.008;
  b << 0.9, 0.6, 0.3, 1.1;
  return MatrixLaw::finite({{PositiveMatrix(a), 0.8}, {PositiveMatrix(b), 0.2}});
}

Scenario reference_scenario() {
  Scenario sc;
  sc.dim = 2;
  sc.mu = reference_law();
  sc.eta = VectorLaw::product({Uniform1D{0.5, 1.5}, Uniform1D{0.5, 1.5}});
  sc.s2 = 1.5;
  return sc;
}

Scenario scalar_scenario() {
  Scenario sc;
  sc.dim = 1;
  sc.mu = MatrixLaw::finite({{PositiveMatrix(Matrix::Constant(1, 1, 0.00390625)), 0.9},
                             {PositiveMatrix(Matrix::Constant(1, 1, 16.0)), 0.1}});
  sc.eta = VectorLaw::product({LogUniform1D{0.25, 4.0}});
  sc.s2 = 0.54;
  return sc;
}

void BM_BuildTransferOperator(benchmark::State& state) {
  const auto mu = reference_law();
  const auto grid = SphereGrid::build(2, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_transfer_operator(mu, 1.0, grid, false));
}
BENCHMARK(BM_BuildTransferOperator)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_SolveEigen(benchmark::State& state) {
  const auto grid = SphereGrid::build(2, static_cast<int>(state.range(0)));
  const auto m = build_transfer_operator(reference_law(), 1.0, grid, false);
  for (auto _ : state) benchmark::DoNotOptimize(solve_eigen(m));
}
BENCHMARK(BM_SolveEigen)->Arg(256)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_SolveChi(benchmark::State& state) {
  const auto grid = SphereGrid::build(2, 512);
  const auto mu = reference_law();
  for (auto _ : state) benchmark::DoNotOptimize(solve_chi(mu, 2, grid, 0.5));
}
BENCHMARK(BM_SolveChi)->Unit(benchmark::kMillisecond);

void BM_SampleRBatch(benchmark::State& state, Scenario (*make)()) {
  const Scenario sc = make();
  BranchingConfig cfg;
  cfg.depth = static_cast<int>(state.range(0));
  cfg.samples = 1000;
  for (auto _ : state) benchmark::DoNotOptimize(sample_R_batch(sc, cfg, 1, 1));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cfg.samples *
                                                    tree_node_count(sc.N, cfg.depth)));
}
BENCHMARK_CAPTURE(BM_SampleRBatch, reference_2d, reference_scenario)->Arg(6)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SampleRBatch, scalar, scalar_scenario)->Arg(6)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_HillEstimate(benchmark::State& state) {
  Stream rng(1);
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (auto& v : x) v = 1.0 / rng.uniform_pos();
  for (auto _ : state) benchmark::DoNotOptimize(hill_estimate(x, x.size() / 1000));
}
BENCHMARK(BM_HillEstimate)->Arg(100000)->Arg(1000000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
