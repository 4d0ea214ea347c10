// Serial reference versus OpenMP kernels. Run with --benchmark_filter to pick
// a kernel; set OMP_NUM_THREADS to vary the parallel width.

#include <benchmark/benchmark.h>

#include <random>

#include "modalign/data.hpp"
#include "modalign/kernels.hpp"
#include "modalign/model.hpp"

namespace {

using namespace modalign;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

template <void (*Kernel)(const Matrix&, const Matrix&, Matrix&)>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  Matrix out(n, n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Gemm<kernels::serial::gemm>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<kernels::parallel::gemm>)->Name("gemm/parallel")->RangeMultiplier(2)->Range(32, 256);

template <void (*Kernel)(const FeatureBatch&, CovarianceMatrix&)>
void BM_Covariance(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 32;
  const Matrix m = random_matrix(rows, d, 3);
  CovarianceMatrix out(d, d);
  for (auto _ : state) {
    Kernel(m, out);
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_Covariance<kernels::serial::covariance>)->Name("covariance/serial")->Arg(32)->Arg(512)->Arg(4096);
BENCHMARK(BM_Covariance<kernels::parallel::covariance>)->Name("covariance/parallel")->Arg(32)->Arg(512)->Arg(4096);

void BM_Batch(benchmark::State& state, Exec exec) {
  SynthConfig cfg;
  cfg.n = static_cast<std::size_t>(state.range(0));
  const Dataset data = gen_synthetic(cfg);
  ModelDims dims;
  dims.input_dims = infer_input_dims(data);
  dims.d_t = dims.d_a = dims.d_v = 16;
  dims.d_all = dims.d = 32;
  const ModelParams params = ModelParams::initialize(dims, 1);
  std::vector<const ModalInputs*> inputs;
  for (const auto& s : data) inputs.push_back(&s.inputs);
  std::vector<Upstream> upstream(data.size());
  for (auto& u : upstream) {
    u.y_all = 1.0;
    u.y_uni = {0.5, 0.5, 0.5};
    for (auto& v : u.projected) v.assign(dims.d, 0.1);
  }
  for (auto _ : state) {
    const BatchTrace trace = forward_batch(params, inputs, exec);
    GradBundle g = backward_batch(params, trace, upstream, exec);
    benchmark::DoNotOptimize(&g);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK_CAPTURE(BM_Batch, serial, Exec::Serial)->Arg(32)->Arg(256);
BENCHMARK_CAPTURE(BM_Batch, parallel, Exec::Parallel)->Arg(32)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
