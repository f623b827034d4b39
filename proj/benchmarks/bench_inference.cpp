#include "cimsim/inference.hpp"

#include <benchmark/benchmark.h>

using namespace cimsim;

namespace {

struct Data {
  QuantizedNetwork net = load_model(std::string(CIMSIM_TEST_DATA) + "/lenet5_standin.json");
  ImageBatch images = load_images(std::string(CIMSIM_TEST_DATA) + "/mnist500-images.idx3-ubyte");
};

const Data& data() {
  static const Data d;
  return d;
}

}  // namespace

static void BM_Reference(benchmark::State& state) {
  const auto& d = data();
  const auto x = quantize_image(d.images.image(0), 784, 8);
  for (auto _ : state) benchmark::DoNotOptimize(reference_forward(d.net, x));
}
BENCHMARK(BM_Reference);

// one image through the simulated macro; arg = RunMode
static void BM_EngineForward(benchmark::State& state) {
  const auto& d = data();
  const auto mode = static_cast<RunMode>(state.range(0));
  const Engine engine(d.net, SimConfig{}, mode, 1);
  const auto x = quantize_image(d.images.image(0), 784, 8);
  std::mt19937_64 rng(4);
  JobStats st;
  for (auto _ : state) benchmark::DoNotOptimize(engine.forward(x, rng, st));
  state.counters["conversions/img"] = benchmark::Counter(static_cast<double>(st.conversions) / state.iterations());
}
BENCHMARK(BM_EngineForward)
    ->Arg(static_cast<int>(RunMode::pass_through))
    ->Arg(static_cast<int>(RunMode::ideal))
    ->Arg(static_cast<int>(RunMode::variation))
    ->Unit(benchmark::kMillisecond);

// engine construction includes programming and, for variation, calibrating the chip
static void BM_EngineBuild(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state) benchmark::DoNotOptimize(Engine(d.net, SimConfig{}, RunMode::variation, 1));
}
BENCHMARK(BM_EngineBuild)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
