// Parallel kernels against their serial references.
//   ./bench_kernels --benchmark_filter=Forward
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>

#include "uth/network.hpp"
#include "uth/reference.hpp"
#include "uth/retrieval.hpp"

namespace {

using namespace uth;

std::vector<ImageSample> make_batch(std::size_t n) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ImageSample> batch(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch[i].dims = kMnistDims;
    batch[i].index = i;
    batch[i].pixels.resize(kMnistDims.size());
    for (double& p : batch[i].pixels) p = u(gen);
  }
  return batch;
}

std::vector<const ImageSample*> pointers(const std::vector<ImageSample>& batch) {
  std::vector<const ImageSample*> out;
  for (const auto& s : batch) out.push_back(&s);
  return out;
}

void BM_ForwardParallel(benchmark::State& state) {
  const auto params = build_network(default_layer_spec(16), kMnistDims, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
  const auto ptrs = pointers(batch);
  for (auto _ : state) benchmark::DoNotOptimize(compute_features(params, ptrs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardParallel)->Arg(32)->Arg(96);

void BM_ForwardReference(benchmark::State& state) {
  const auto params = build_network(default_layer_spec(16), kMnistDims, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
  const auto ptrs = pointers(batch);
  for (auto _ : state) benchmark::DoNotOptimize(reference::forward(params, ptrs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardReference)->Arg(32)->Arg(96);

void BM_ForwardBackwardParallel(benchmark::State& state) {
  const auto params = build_network(default_layer_spec(16), kMnistDims, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
  const auto ptrs = pointers(batch);
  const Matrix dloss(batch.size(), 16, 0.01);
  for (auto _ : state) {
    auto fwd = forward(params, ptrs);
    benchmark::DoNotOptimize(backward(params, std::move(fwd.trace), dloss));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackwardParallel)->Arg(32)->Arg(96);

void BM_ForwardBackwardReference(benchmark::State& state) {
  const auto params = build_network(default_layer_spec(16), kMnistDims, 1);
  const auto batch = make_batch(static_cast<std::size_t>(state.range(0)));
  const auto ptrs = pointers(batch);
  const Matrix dloss(batch.size(), 16, 0.01);
  for (auto _ : state) benchmark::DoNotOptimize(reference::backward(params, ptrs, dloss));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackwardReference)->Arg(32)->Arg(96);

CodeDatabase make_db(std::size_t n, int bits) {
  std::mt19937_64 gen(3);
  CodeDatabase db(bits);
  for (std::size_t i = 0; i < n; ++i) {
    HashCode code(bits);
    for (int b = 0; b < bits; ++b) code.set(b, gen() & 1);
    db.add(code, i);
  }
  return db;
}

void BM_HammingScanParallel(benchmark::State& state) {
  const auto db = make_db(static_cast<std::size_t>(state.range(0)), 64);
  const auto query = db.code(0);
  for (auto _ : state) benchmark::DoNotOptimize(hamming_scan(db, query));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HammingScanParallel)->Arg(10000)->Arg(70000);

void BM_HammingScanReference(benchmark::State& state) {
  const auto db = make_db(static_cast<std::size_t>(state.range(0)), 64);
  const auto query = db.code(0);
  for (auto _ : state) benchmark::DoNotOptimize(reference::hamming_scan(db, query));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HammingScanReference)->Arg(10000)->Arg(70000);

}  // namespace
BENCHMARK_MAIN();
