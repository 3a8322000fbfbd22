// Collision-model costs: single-bin channel application and the full
// two-quantum sector sweep across a time-bin lattice.
#include <benchmark/benchmark.h>
#include <wcl/davies.hpp>
#include <wcl/dilation.hpp>
#include <wcl/model_file.hpp>

using namespace wcl;

#ifndef MODELS_DIR
#define MODELS_DIR "models"
#endif

namespace {

const davies::DaviesData& flat_data() {
  static const davies::DaviesData data = [] {
    const auto mf =
        sys::load_model(std::string(MODELS_DIR) + "/two_level_flat.model");
    return davies::make_davies_data(mf.system, mf.reservoir);
  }();
  return data;
}

void BM_collision_channel_power(benchmark::State& state) {
  const auto bin = dil::make_bin_system(flat_data(), 1e-3, 1);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Mat phi = dil::collision_channel_power(bin, n);
    benchmark::DoNotOptimize(phi.data());
  }
}

void BM_sector_sweep(benchmark::State& state) {
  const double t = 0.5;
  const double dt = t / static_cast<double>(state.range(0));
  const auto eng =
      dil::make_sector_engine(flat_data(), dil::make_lattice(0.0, t, dt, 4.0 * dt));
  Vec c = Vec::Zero(flat_data().dim());
  c[0] = 1.0;
  Vec kernel = Vec::Constant(eng.lattice.total_bins, cplx(0.1, 0.05));
  for (auto _ : state) {
    auto st = dil::make_one_particle_state(eng, c, 0, kernel);
    dil::sweep(eng, st);
    benchmark::DoNotOptimize(st.squared_norm());
  }
  state.SetComplexityN(state.range(0));
}

}  // namespace

BENCHMARK(BM_collision_channel_power)->Arg(100)->Arg(1000);
BENCHMARK(BM_sector_sweep)->Arg(10)->Arg(20)->Arg(40)->Complexity();

BENCHMARK_MAIN();
