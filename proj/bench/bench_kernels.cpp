// Serial reference vs OpenMP kernels on a synthetic node.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <numeric>

#include "bartrdd/kernels.hpp"
#include "bartrdd/rng.hpp"

using namespace bartrdd;

namespace {

struct Node {
  Matrix features;
  std::vector<std::vector<std::uint32_t>> orders;
  std::vector<double> weight, wresid;
  LeafStat parent;
  TagCounts tags{};

  Node(std::size_t n, std::size_t p) : features(n, p), weight(n, 1.0), wresid(n) {
    Rng rng(1);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) features(i, j) = rng.normal();
      wresid[i] = rng.normal();
      parent.precision += 1.0;
      parent.weighted_sum += wresid[i];
    }
    parent.n = n;
    orders.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      orders[j].resize(n);
      std::iota(orders[j].begin(), orders[j].end(), 0u);
      auto col = features.col(j);
      std::stable_sort(orders[j].begin(), orders[j].end(),
                       [&](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
  }

  kernels::ScanInput input() const { return {&features, orders, weight, wresid, {}, 100}; }
};

template <bool Parallel>
void BM_Scan(benchmark::State& state) {
  Node node(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  auto in = node.input();
  for (auto _ : state) {
    auto c = Parallel ? kernels::scan_candidates_omp(in, node.parent, node.tags)
                      : kernels::scan_candidates_serial(in, node.parent, node.tags);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

template <bool Parallel>
void BM_LogWeights(benchmark::State& state) {
  Node node(static_cast<std::size_t>(state.range(0)), 8);
  auto in = node.input();
  in.max_candidates = node.features.rows();
  auto cands = kernels::scan_candidates_serial(in, node.parent, node.tags);
  std::vector<double> out(cands.size());
  for (auto _ : state) {
    if (Parallel)
      kernels::candidate_log_weights_omp(cands, 0.1, out);
    else
      kernels::candidate_log_weights_serial(cands, 0.1, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cands.size()));
}

template <bool Parallel>
void BM_Predict(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Node node(n, 6);
  Forest forest(50);
  TreeGrower grower(node.features, GrowSettings{});
  std::vector<double> fitted(n);
  Rng rng(2);
  for (auto& t : forest.trees()) t = grower.grow(node.weight, node.wresid, fitted, rng);
  std::vector<double> out(n);
  for (auto _ : state) {
    if (Parallel)
      kernels::predict_rows_omp(forest, node.features, out);
    else
      kernels::predict_rows_serial(forest, node.features, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Scan<false>)->Args({2000, 6})->Args({20000, 6})->Args({20000, 20});
BENCHMARK(BM_Scan<true>)->Args({2000, 6})->Args({20000, 6})->Args({20000, 20});
BENCHMARK(BM_LogWeights<false>)->Arg(2000)->Arg(20000);
BENCHMARK(BM_LogWeights<true>)->Arg(2000)->Arg(20000);
BENCHMARK(BM_Predict<false>)->Arg(2000)->Arg(50000);
BENCHMARK(BM_Predict<true>)->Arg(2000)->Arg(50000);

BENCHMARK_MAIN();
