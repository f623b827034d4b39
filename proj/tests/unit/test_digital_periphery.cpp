#include "cimsim/digital_periphery.hpp"
#include "cimsim/error.hpp"
#include "cimsim/macro_sim.hpp"
#include "cimsim/mapping.hpp"

#include <doctest.h>

#include <random>

using namespace cimsim;

namespace {

const MacroGeometry G{};
const AnalogParams A{};

long exact_mac(const std::vector<int>& w, const std::vector<int>& x) {
  long s = 0;
  for (size_t i = 0; i < w.size(); ++i) s += long{w[i]} * x[i];
  return s;
}

enum class Readout { pass_through, quantized };

// Full bit-serial pipeline for one short vector on an ideal macro. Returns the
// reconstruction; `bound` accumulates the shift-weighted half-LSB allowance.
long pipeline(const std::vector<int>& w, const std::vector<int>& x, int wbits, int xbits, Encoding enc, Readout mode,
              double* bound = nullptr, bool* saturated = nullptr) {
  const MacroSimulator sim(G, A, VariationProfile::ideal(G));
  const int planes = weight_planes(wbits, enc);
  const int level = tree_level_for(wbits, enc);
  const int passes = xbits <= 4 ? 1 : 2;
  std::vector<std::vector<uint8_t>> plus(static_cast<size_t>(planes), std::vector<uint8_t>(128, 0));
  auto minus = plus;
  for (size_t i = 0; i < w.size(); ++i) {
    if (enc == Encoding::twos_complement) {
      const auto b = encode_twos(w[i], wbits);
      for (int p = 0; p < planes; ++p) plus[static_cast<size_t>(p)][i] = b.planes[static_cast<size_t>(planes - 1 - p)];
    } else {
      const auto t = encode_ternary_planes(w[i], wbits);
      for (int p = 0; p < planes; ++p) {
        plus[static_cast<size_t>(p)][i] = t[static_cast<size_t>(p)].plus;
        minus[static_cast<size_t>(p)][i] = t[static_cast<size_t>(p)].minus;
      }
    }
  }
  auto read = [&](double vp, double vm, AdcMode m) -> long {
    if (mode == Readout::pass_through) return sim.pass_through(vp) - sim.pass_through(vm);
    const auto c = m == AdcMode::single ? sim.convert_single(0, vp, nullptr) : sim.convert_differential(0, vp, vm, nullptr);
    if (saturated && c.saturated) *saturated = true;
    return long{c.value()} * 30;
  };
  std::array<PartialSum, 2> nib{};
  for (int q = 0; q < passes; ++q) {
    std::vector<uint8_t> codes(128, 0);
    for (size_t i = 0; i < x.size(); ++i) codes[i] = static_cast<uint8_t>(passes == 1 ? x[i] : (x[i] >> (4 * q)) & 15);
    std::vector<long> partials;
    for (int p = 0; p < planes; ++p) {
      const double vp = sim.run_slice(0, codes, plus[static_cast<size_t>(p)]).v_out;
      if (enc == Encoding::twos_complement) {
        const bool msb = wbits > 1 && p == planes - 1;
        partials.push_back(sign_transform(read(vp, A.vdd, AdcMode::single), msb, enc, p, q).value);
      } else {
        const double vm = sim.run_slice(1, codes, minus[static_cast<size_t>(p)]).v_out;
        partials.push_back(sign_transform(read(vp, vm, AdcMode::differential), false, enc, p, q).value);
      }
      if (bound) *bound += std::pow(16.0, q) * std::pow(2.0, p) * 15.0;
    }
    nib[static_cast<size_t>(q)] = PartialSum{tree_combine(partials, TreeConfig{level, enc}), 0, q};
  }
  return passes == 1 ? nib[0].value : accumulate_nibbles(nib[0], nib[1]);
}

std::vector<int> random_weights(std::mt19937_64& rng, size_t n, int wbits, Encoding enc) {
  const int lo = enc == Encoding::ternary ? -ternary_max(wbits) : twos_min(wbits);
  const int hi = enc == Encoding::ternary ? ternary_max(wbits) : twos_max(wbits);
  std::vector<int> w(n);
  for (auto& v : w) v = lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
  return w;
}

std::vector<int> random_inputs(std::mt19937_64& rng, size_t n, int xbits) {
  std::vector<int> x(n);
  for (auto& v : x) v = static_cast<int>(rng() % (1u << xbits));
  return x;
}

}  // namespace

TEST_CASE("sign transform") {
  AdcCode c{70, AdcMode::single, false};
  CHECK(sign_transform(c, false, Encoding::twos_complement).value == 6);
  CHECK(sign_transform(c, true, Encoding::twos_complement).value == -6);
  CHECK(sign_transform(c, true, Encoding::ternary).value == 6);
  CHECK(sign_transform(AdcCode{64, AdcMode::single, false}, true, Encoding::twos_complement).value == 0);
  CHECK(sign_transform(AdcCode{64, AdcMode::differential, false}, false, Encoding::ternary).value == 0);
  const auto s = sign_transform(AdcCode{60, AdcMode::differential, false}, false, Encoding::ternary, 2, 1);
  CHECK(s.value == -4);
  CHECK(s.weight_bit_index == 2);
  CHECK(s.input_nibble_index == 1);
}

TEST_CASE("nibble accumulation") {
  CHECK(accumulate_nibbles({3, 0, 0}, {2, 0, 1}) == 35);
  CHECK(accumulate_nibbles({0, 0, 0}, {0, 0, 1}) == 0);
  CHECK_THROWS_AS(accumulate_nibbles({3, 0, 1}, {2, 0, 1}), Error);
  for (int x = 0; x < 256; ++x) CHECK(accumulate_nibbles({x & 15, 0, 0}, {x >> 4, 0, 1}) == x);
  CHECK(accumulate_nibbles({0xB, 0, 0}, {0xA, 0, 1}) == 171);
}

TEST_CASE("tree combine examples") {
  // 2-bit weights all -1, four inputs of 1
  std::vector<long> partials{4, -4};
  CHECK(tree_combine(partials, {1, Encoding::twos_complement}) == -4);
  const std::vector<int> w{-1, -1, -1, -1}, x{1, 1, 1, 1};
  CHECK(tree_combine(partials, {1, Encoding::twos_complement}) == exact_mac(w, x));

  std::vector<long> one{17};
  CHECK(tree_combine(one, {0, Encoding::twos_complement}) == 17);
  CHECK_THROWS_AS(tree_combine(partials, {2, Encoding::twos_complement}), Error);
  CHECK_THROWS_AS(tree_combine(one, {0, Encoding::ternary}), Error);

  std::mt19937_64 rng(5);
  for (int draw = 0; draw < 16; ++draw) {
    const auto wv = random_weights(rng, 8, 3, Encoding::ternary);
    const auto xv = random_inputs(rng, 8, 4);
    std::vector<long> p(2, 0);
    for (size_t i = 0; i < 8; ++i) {
      const auto t = encode_ternary_planes(wv[i], 3);
      for (size_t k = 0; k < 2; ++k) p[k] += (t[k].plus - t[k].minus) * long{xv[i]};
    }
    CHECK(tree_combine(p, {2, Encoding::ternary}) == exact_mac(wv, xv));
  }
}

TEST_CASE("supported bitwidths") {
  CHECK(supported_bitwidth(3, Encoding::twos_complement) == 8);
  CHECK(supported_bitwidth(0, Encoding::twos_complement) == 1);
  CHECK(supported_bitwidth(1, Encoding::ternary) == 2);
  CHECK(supported_bitwidth(3, Encoding::ternary) == 5);
  CHECK_THROWS_AS(supported_bitwidth(0, Encoding::ternary), Error);
  try {
    supported_bitwidth(0, Encoding::ternary);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::unsupported);
  }
  CHECK(supported_bitwidths(Encoding::twos_complement) == std::vector<int>{1, 2, 4, 8});
  CHECK(supported_bitwidths(Encoding::ternary) == std::vector<int>{2, 3, 5});
  CHECK_THROWS_AS(tree_level_for(3, Encoding::twos_complement), Error);
  CHECK(weight_planes(5, Encoding::ternary) == 4);
  CHECK(weight_planes(4, Encoding::twos_complement) == 4);
}

TEST_CASE("pass-through pipeline is exact for every combination") {
  std::mt19937_64 rng(2024);
  for (const auto enc : {Encoding::twos_complement, Encoding::ternary}) {
    for (int wbits : supported_bitwidths(enc)) {
      for (int xbits = 1; xbits <= 8; ++xbits) {
        for (int trial = 0; trial < 12; ++trial) {
          const size_t n = 1 + rng() % 16;
          const auto w = random_weights(rng, n, wbits, enc);
          const auto x = random_inputs(rng, n, xbits);
          CHECK(pipeline(w, x, wbits, xbits, enc, Readout::pass_through) == exact_mac(w, x));
        }
      }
    }
  }
}

TEST_CASE("quantized pipeline stays within the shift-weighted half-LSB bound") {
  std::mt19937_64 rng(77);
  int checked = 0;
  for (const auto enc : {Encoding::twos_complement, Encoding::ternary}) {
    for (int wbits : supported_bitwidths(enc)) {
      for (int xbits : {4, 8}) {
        for (int trial = 0; trial < 40; ++trial) {
          const size_t n = 1 + rng() % 16;
          const auto w = random_weights(rng, n, wbits, enc);
          const auto x = random_inputs(rng, n, xbits);
          double bound = 0;
          bool sat = false;
          const long got = pipeline(w, x, wbits, xbits, enc, Readout::quantized, &bound, &sat);
          if (sat) continue;
          ++checked;
          CHECK(std::abs(got - exact_mac(w, x)) <= bound);
        }
      }
    }
  }
  CHECK(checked > 300);
}

TEST_CASE("ternary and 2-bit 2's complement agree on {-1,0,1} weights") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const size_t n = 1 + rng() % 16;
    std::vector<int> w(n);
    for (auto& v : w) v = static_cast<int>(rng() % 3) - 1;
    const auto x = random_inputs(rng, n, 4);
    CHECK(pipeline(w, x, 2, 4, Encoding::ternary, Readout::pass_through) ==
          pipeline(w, x, 2, 4, Encoding::twos_complement, Readout::pass_through));
  }
}
