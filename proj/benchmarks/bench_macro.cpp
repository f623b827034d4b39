#include "cimsim/analog_core.hpp"
#include "cimsim/characterization.hpp"
#include "cimsim/config.hpp"
#include "cimsim/macro_sim.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace cimsim;

namespace {

std::vector<uint8_t> random_codes(std::mt19937_64& rng, int mod) {
  std::vector<uint8_t> v(128);
  for (auto& c : v) c = static_cast<uint8_t>(rng() % static_cast<uint64_t>(mod));
  return v;
}

}  // namespace

static void BM_SliceMac(benchmark::State& state) {
  const MacroGeometry g;
  const AnalogParams a;
  std::mt19937_64 rng(1);
  const auto x = random_codes(rng, 16), w = random_codes(rng, 2);
  for (auto _ : state) benchmark::DoNotOptimize(slice_mac(x, w, a, g));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_SliceMac);

// arg 0: ideal chip, 1: sampled chip with comparator noise
static void BM_ConvertSingle(benchmark::State& state) {
  const SimConfig cfg;
  const auto profile = state.range(0) ? chip_profile(cfg, 1) : VariationProfile::ideal(cfg.geometry);
  const MacroSimulator sim(cfg.geometry, cfg.analog, profile);
  std::mt19937_64 rng(2);
  const double vpu = volts_per_pre_unit(cfg.analog, cfg.geometry);
  int pre = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim.convert_single(pre % 64, cfg.analog.vdd - (pre % 1921) * vpu, &rng));
    pre += 37;
  }
}
BENCHMARK(BM_ConvertSingle)->Arg(0)->Arg(1);

static void BM_ConvertDifferential(benchmark::State& state) {
  const SimConfig cfg;
  const MacroSimulator sim(cfg.geometry, cfg.analog, chip_profile(cfg, 1));
  std::mt19937_64 rng(3);
  const double vpu = volts_per_pre_unit(cfg.analog, cfg.geometry);
  int pre = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sim.convert_differential(pre % 32, cfg.analog.vdd - (pre % 1921) * vpu, cfg.analog.vdd - 900 * vpu, &rng));
    pre += 41;
  }
}
BENCHMARK(BM_ConvertDifferential);

// full chip sweep + fits; repeats per point as the argument
static void BM_Characterize(benchmark::State& state) {
  const SimConfig cfg;
  const MacroSimulator sim(cfg.geometry, cfg.analog, chip_profile(cfg, 1));
  SweepOptions opt;
  opt.repeats = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(characterize(sim, opt, calibration_seed(1)));
}
BENCHMARK(BM_Characterize)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
