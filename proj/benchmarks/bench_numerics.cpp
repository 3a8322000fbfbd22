// Matrix-exponential throughput on skew-Hermitian generators of growing size.
#include <benchmark/benchmark.h>
#include <wcl/numerics.hpp>

#include <random>

using namespace wcl;

namespace {

Mat random_hermitian(int d, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = cplx(gauss(rng), gauss(rng));
  return 0.5 * (a + a.adjoint());
}

void BM_expm(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Mat gen = cplx(0.0, -1.0) * random_hermitian(d, 7);
  for (auto _ : state) {
    Mat e = expm(gen);
    benchmark::DoNotOptimize(e.data());
  }
}

void BM_op_norm(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const Mat a = random_hermitian(d, 11);
  for (auto _ : state) {
    double n = op_norm(a);
    benchmark::DoNotOptimize(n);
  }
}

}  // namespace

BENCHMARK(BM_expm)->Arg(4)->Arg(16)->Arg(64)->Arg(128);
BENCHMARK(BM_op_norm)->Arg(16)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
