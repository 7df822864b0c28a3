#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "nlab/kernels.hpp"
#include "nlab/netcore.hpp"

namespace {

nlab::Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  nlab::Matrix m(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : m.data) v = u(rng);
  return m;
}

// Args: batch, in, out.
template <auto Kernel>
void BM_affine(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const nlab::Matrix x = random_matrix(b, in, 1);
  const nlab::Matrix w = random_matrix(out, in, 2);
  const std::vector<double> bias(out, 0.1);
  nlab::Matrix y(b, out);
  for (auto _ : state) {
    Kernel(x, w, bias, y);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b * in * out));
}

template <auto Kernel>
void BM_weight_grad(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const nlab::Matrix delta = random_matrix(b, out, 3);
  const nlab::Matrix act = random_matrix(b, in, 4);
  nlab::Matrix gw(out, in);
  std::vector<double> gb(out);
  for (auto _ : state) {
    Kernel(delta, act, gw, gb);
    benchmark::DoNotOptimize(gw.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b * in * out));
}

template <auto Kernel>
void BM_input_grad(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto in = static_cast<std::size_t>(state.range(1));
  const auto out = static_cast<std::size_t>(state.range(2));
  const nlab::Matrix delta = random_matrix(b, out, 5);
  const nlab::Matrix w = random_matrix(out, in, 6);
  nlab::Matrix gx(b, in);
  for (auto _ : state) {
    Kernel(delta, w, gx);
    benchmark::DoNotOptimize(gx.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b * in * out));
}

// Full-dataset forward pass as used by history recording.
void BM_forward_dataset(benchmark::State& state) {
  const std::vector<std::size_t> dims{20, 32, 16, 2};
  const auto net = nlab::init_network(dims, 1);
  const nlab::Matrix x = random_matrix(static_cast<std::size_t>(state.range(0)), 20, 7);
  for (auto _ : state) benchmark::DoNotOptimize(nlab::forward(net, x).data.data());
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 20, 32})->Args({64, 64, 64})->Args({2000, 20, 32})->Args({1024, 128, 64});
}

}  // namespace

BENCHMARK(BM_affine<nlab::kernels::serial::affine>)->Name("affine/serial")->Apply(shapes);
BENCHMARK(BM_affine<nlab::kernels::omp::affine>)->Name("affine/omp")->Apply(shapes);
BENCHMARK(BM_weight_grad<nlab::kernels::serial::weight_grad>)->Name("weight_grad/serial")->Apply(shapes);
BENCHMARK(BM_weight_grad<nlab::kernels::omp::weight_grad>)->Name("weight_grad/omp")->Apply(shapes);
BENCHMARK(BM_input_grad<nlab::kernels::serial::input_grad>)->Name("input_grad/serial")->Apply(shapes);
BENCHMARK(BM_input_grad<nlab::kernels::omp::input_grad>)->Name("input_grad/omp")->Apply(shapes);
BENCHMARK(BM_forward_dataset)->Arg(2000)->Arg(20000);
BENCHMARK_MAIN();
