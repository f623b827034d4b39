#include "cimsim/analog_core.hpp"
#include "cimsim/cisar_adc.hpp"
#include "cimsim/error.hpp"

#include <doctest.h>

#include <map>
#include <numeric>
#include <random>

using namespace cimsim;

namespace {

const MacroGeometry G{};
const AnalogParams A{};

// Nearest level by exhaustive search, ties to the larger code, then clamp.
int oracle_raw(long pre, AdcMode mode) {
  int best = -64;
  for (int c = -64; c <= 64; ++c) {
    const long d = std::labs(pre - 30L * c);
    const long db = std::labs(pre - 30L * best);
    if (d < db || d == db) best = c;
  }
  const int lo = mode == AdcMode::single ? 64 : 0;
  return std::clamp(64 + best, lo, 127);
}

double line(long pre) { return A.vdd - pre * volts_per_pre_unit(A, G); }

}  // namespace

TEST_CASE("adc params") {
  const auto p = AdcParams::from(A, G);
  CHECK(p.unit_step == doctest::Approx(p.fullscale / 64));
  CHECK(p.fullscale == doctest::Approx(1920 * A.dac_step * 128 * A.c_mom / (128 * A.c_mom + A.c_p) / 128));
  CHECK(std::accumulate(kFiringSchedule.begin(), kFiringSchedule.end(), 0) == 63);
}

TEST_CASE("ideal quantizer examples") {
  CHECK(ideal_quantize(0, AdcMode::differential).raw == 64);
  const auto top = ideal_quantize(1920, AdcMode::single);
  CHECK(top.raw == 127);
  CHECK(top.value() == 63);
  CHECK(top.saturated);
  CHECK(ideal_quantize(45, AdcMode::single).raw == 66);
  CHECK(ideal_quantize(44, AdcMode::single).raw == 65);
  CHECK(ideal_quantize(-1920, AdcMode::differential).raw == 0);
  CHECK_FALSE(ideal_quantize(-1920, AdcMode::differential).saturated);
  CHECK_FALSE(ideal_quantize(-1935, AdcMode::differential).saturated);  // -64.5 rounds up to -64
  CHECK(ideal_quantize(-1936, AdcMode::differential).saturated);
  CHECK(ideal_quantize(-20, AdcMode::single).raw == 64);
  CHECK(ideal_quantize(-20, AdcMode::single).saturated);
}

TEST_CASE("ideal quantizer against exhaustive nearest-level search") {
  std::map<int, int> per_code;
  for (long pre = -1920; pre <= 1920; ++pre) {
    CHECK(ideal_quantize(pre, AdcMode::differential).raw == oracle_raw(pre, AdcMode::differential));
    if (pre >= 0) CHECK(ideal_quantize(pre, AdcMode::single).raw == oracle_raw(pre, AdcMode::single));
    ++per_code[ideal_quantize(pre, AdcMode::differential).raw];
  }
  // every interior code owns exactly 30 pre-ADC units
  for (int c = 1; c < 127; ++c) CHECK(per_code[c] == 30);
}

TEST_CASE("ideal convert equals the quantizer on every integer input") {
  const auto p = AdcParams::from(A, G);
  const AdcNonideality ideal;
  for (long pre = 0; pre <= 1920; ++pre) {
    const auto c = convert(line(pre), A.vdd, AdcMode::single, p, ideal, nullptr);
    const auto q = ideal_quantize(pre, AdcMode::single);
    CHECK(c.raw == q.raw);
    CHECK(c.saturated == q.saturated);
  }
  for (long d = -1920; d <= 1920; ++d) {
    const double vp = d >= 0 ? line(d) : A.vdd;
    const double vm = d >= 0 ? A.vdd : line(-d);
    CHECK(convert(vp, vm, AdcMode::differential, p, ideal, nullptr).raw ==
          ideal_quantize(d, AdcMode::differential).raw);
  }
}

TEST_CASE("dense random input pairs") {
  const auto p = AdcParams::from(A, G);
  const AdcNonideality ideal;
  std::mt19937_64 rng(42);
  int mismatches = 0;
  for (int i = 0; i < 100000; ++i) {
    const long a = static_cast<long>(rng() % 1921), b = static_cast<long>(rng() % 1921);
    mismatches += convert(line(a), line(b), AdcMode::differential, p, ideal, nullptr).raw !=
                  ideal_quantize(a - b, AdcMode::differential).raw;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("equal inputs give mid code") {
  const auto p = AdcParams::from(A, G);
  CHECK(convert(0.9, 0.9, AdcMode::differential, p, AdcNonideality{}, nullptr).raw == 64);
}

TEST_CASE("msb step fires every cell twice, later steps a unary prefix") {
  const auto p = AdcParams::from(A, G);
  FiringLog log;
  convert(line(700), A.vdd, AdcMode::single, p, AdcNonideality{}, nullptr, &log);
  REQUIRE(log.cells_per_step.size() == 7);
  REQUIRE(log.cells_per_step[0].size() == 32);
  std::map<int, int> count;
  for (int c : log.cells_per_step[0]) ++count[c];
  CHECK(count.size() == 16);
  for (const auto& [cell, n] : count) CHECK(n == 2);
  CHECK(log.cells_per_step[1].size() == 16);
  CHECK(log.cells_per_step[2] == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(log.cells_per_step[5] == std::vector<int>{0});
  CHECK(log.cells_per_step[6].empty());
}

TEST_CASE("monotonic in the input difference") {
  const auto p = AdcParams::from(A, G);
  int prev = -1;
  for (int i = -20000; i <= 20000; ++i) {
    const double dv = i * p.fullscale / 10000.0 / 2.0;
    const auto c = convert(A.vdd - std::max(dv, 0.0), A.vdd - std::max(-dv, 0.0), AdcMode::differential, p,
                           AdcNonideality{}, nullptr);
    CHECK(c.raw >= prev);
    prev = c.raw;
  }
}

TEST_CASE("noise needs an rng and is deterministic under a seed") {
  const auto p = AdcParams::from(A, G);
  AdcNonideality n;
  n.noise_lsb = 0.5;
  CHECK_THROWS_AS(convert(line(300), A.vdd, AdcMode::single, p, n, nullptr), Error);
  std::mt19937_64 r1(9), r2(9);
  for (int i = 0; i < 200; ++i)
    CHECK(convert(line(300 + i), A.vdd, AdcMode::single, p, n, &r1).raw ==
          convert(line(300 + i), A.vdd, AdcMode::single, p, n, &r2).raw);
}

TEST_CASE("rms examples") {
  const auto p = AdcParams::from(A, G);
  std::mt19937_64 rng(1);
  CHECK(measure_rms(line(500), A.vdd, AdcMode::single, p, AdcNonideality{}, 128, rng) == 0.0);
  CHECK_THROWS_AS(measure_rms(line(500), A.vdd, AdcMode::single, p, AdcNonideality{}, 1, rng), Error);

  // right on a transition: a fair coin between two codes
  AdcNonideality tiny;
  tiny.noise_lsb = 0.01;
  const double at_edge = measure_rms(line(15 + 30 * 20), A.vdd, AdcMode::single, p, tiny, 4096, rng);
  CHECK(at_edge == doctest::Approx(0.5).epsilon(0.05));
  CHECK(at_edge <= 0.5 + 1e-12);
  const double mid = measure_rms(line(30 * 20), A.vdd, AdcMode::single, p, tiny, 512, rng);
  CHECK(mid == 0.0);
}

TEST_CASE("comparator offset shifts thresholds, ci mismatch bends them") {
  const auto p = AdcParams::from(A, G);
  AdcNonideality off;
  off.comparator_offset_lsb = 2.0;
  CHECK(convert(line(300), A.vdd, AdcMode::single, p, off, nullptr).value() == 12);
  off.comparator_offset_lsb = -3.0;
  const auto clipped = convert(line(60), A.vdd, AdcMode::single, p, off, nullptr);
  CHECK(clipped.value() == 0);
  CHECK(clipped.saturated);

  AdcNonideality mm;
  for (int c = 0; c < kCiCells; ++c) mm.ci_cell_gain[static_cast<size_t>(c)] = c < 8 ? 1.03 : 0.97;
  int differ = 0;
  for (long pre = 0; pre <= 1920; ++pre)
    differ += convert(line(pre), A.vdd, AdcMode::single, p, mm, nullptr).raw !=
              ideal_quantize(pre, AdcMode::single).raw;
  CHECK(differ > 0);
}
