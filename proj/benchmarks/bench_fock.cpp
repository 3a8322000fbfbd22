// Cost of building the truncated grid space, its propagator, and the
// reduced dynamics as the mode count grows.
#include <benchmark/benchmark.h>
#include <wcl/fock.hpp>
#include <wcl/model_file.hpp>

using namespace wcl;

#ifndef MODELS_DIR
#define MODELS_DIR "models"
#endif

namespace {

const sys::ModelFile& flat_model() {
  static const sys::ModelFile mf =
      sys::load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
  return mf;
}

void BM_build_space(benchmark::State& state) {
  const auto& mf = flat_model();
  const auto disc = mf.discretize(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto space = fock::make_fock_space(mf.system, disc, 2);
    benchmark::DoNotOptimize(space.total_dim);
  }
}

void BM_propagator(benchmark::State& state) {
  const auto& mf = flat_model();
  const auto disc = mf.discretize(static_cast<int>(state.range(0)));
  const auto space = fock::make_fock_space(mf.system, disc, 2);
  for (auto _ : state) {
    fock::FockPropagator prop(space, 0.5);
    benchmark::DoNotOptimize(&prop);
  }
}

void BM_reduced_dynamics(benchmark::State& state) {
  const auto& mf = flat_model();
  const auto disc = mf.discretize(static_cast<int>(state.range(0)));
  const auto space = fock::make_fock_space(mf.system, disc, 2);
  const fock::FockPropagator prop(space, 0.5);
  for (auto _ : state) {
    Mat g = fock::reduced_dynamics(space, prop, 0.5, 0.5, 0.0);
    benchmark::DoNotOptimize(g.data());
  }
}

}  // namespace

BENCHMARK(BM_build_space)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_propagator)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK(BM_reduced_dynamics)->Arg(4)->Arg(8)->Arg(16);

BENCHMARK_MAIN();
