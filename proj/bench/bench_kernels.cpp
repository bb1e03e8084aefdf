// Serial reference kernels against the OpenMP ones on arm-sized inputs.

#include "gpsafe/gp_model.hpp"

#include <benchmark/benchmark.h>

using namespace gpsafe;

namespace {

SquaredExponential arm_kernel() {
  SquaredExponential k;
  k.signal_variance = 1e-6;
  k.lengthscale = 1.0;
  k.input_scale = Vector(6);
  k.input_scale << 3, 3, 0.2, 0.2, 0.05, 0.05;
  return k;
}

Matrix random_rows(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, 6);
  for (Index i = 0; i < n; ++i) m.row(i) = rng.uniform(Box(Vector::Constant(6, -1.0), Vector::Constant(6, 1.0)));
  return m;
}

void BM_KernelMatrix(benchmark::State& state, Execution exec) {
  const Matrix rows = random_rows(state.range(0), 1);
  const SquaredExponential k = arm_kernel();
  for (auto _ : state) benchmark::DoNotOptimize(kernel_matrix(k, rows, exec));
}

void BM_CrossKernel(benchmark::State& state, Execution exec) {
  const Matrix rows = random_rows(state.range(0), 1), queries = random_rows(1024, 2);
  const SquaredExponential k = arm_kernel();
  for (auto _ : state) benchmark::DoNotOptimize(cross_kernel(k, rows, queries, exec));
}

void BM_PredictBatch(benchmark::State& state, Execution exec) {
  const Index n = state.range(0);
  const Matrix rows = random_rows(n, 1);
  Dataset data(4, 2);
  for (Index i = 0; i < n; ++i) {
    const Vector w = rows.row(i).transpose();
    data.add(w.head(4), w.tail(2), w.head(4) * 1.01);
  }
  GpFitOptions opt;
  opt.input_domain = Box(Vector::Constant(6, -1.0), Vector::Constant(6, 1.0));
  opt.prior_mean = PriorMean::state;
  opt.error_bound_tau = 0.1;
  const GpModel m = GpModel::fit(arm_kernel(), data, opt);
  const Matrix queries = random_rows(1024, 3);
  Matrix means;
  Vector sigmas;
  for (auto _ : state) {
    m.predict_batch(queries, means, sigmas, exec);
    benchmark::DoNotOptimize(sigmas.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_KernelMatrix, serial, Execution::serial)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_KernelMatrix, parallel, Execution::parallel)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_CrossKernel, serial, Execution::serial)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_CrossKernel, parallel, Execution::parallel)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_PredictBatch, serial, Execution::serial)->Arg(256)->Arg(1024);
BENCHMARK_CAPTURE(BM_PredictBatch, parallel, Execution::parallel)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
