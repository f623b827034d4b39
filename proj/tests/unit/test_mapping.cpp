#include "cimsim/error.hpp"
#include "cimsim/mapping.hpp"
#include "cimsim/network.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

using namespace cimsim;
using nlohmann::json;

namespace {

const MacroGeometry G{};

LayerSpec conv1x1(int out, int hw) {
  LayerSpec l;
  l.name = "pw";
  l.kernel = 1;
  l.in_channels = 1;
  l.out_channels = out;
  l.input_height = hw;
  l.input_width = hw;
  l.input_bitwidth = 4;
  l.weight_bitwidth = 4;
  return l;
}

std::vector<int8_t> random_weights(const LayerSpec& l, std::mt19937_64& rng) {
  const int lo = l.encoding == Encoding::ternary ? -ternary_max(l.weight_bitwidth) : twos_min(l.weight_bitwidth);
  const int hi = l.encoding == Encoding::ternary ? ternary_max(l.weight_bitwidth) : twos_max(l.weight_bitwidth);
  std::vector<int8_t> w(static_cast<size_t>(l.out_channels) * l.fan_in());
  for (auto& v : w) v = static_cast<int8_t>(lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1)));
  return w;
}

}  // namespace

TEST_CASE("2's complement planes") {
  const auto m1 = encode_twos(-1, 2);
  CHECK(m1.planes == std::vector<uint8_t>{1, 1});
  CHECK(m1.msb_negative);
  CHECK(encode_twos(6, 4).planes == std::vector<uint8_t>{0, 1, 1, 0});
  CHECK(encode_twos(-8, 4).planes == std::vector<uint8_t>{1, 0, 0, 0});
  CHECK_FALSE(encode_twos(1, 1).msb_negative);
  CHECK_THROWS_AS(encode_twos(8, 4), Error);
  CHECK_THROWS_AS(encode_twos(-9, 4), Error);
  CHECK_THROWS_AS(encode_twos(2, 1), Error);
  for (int bits : {1, 2, 4, 8}) {
    int n = 0;
    for (int w = twos_min(bits); w <= twos_max(bits); ++w, ++n) CHECK(decode_twos(encode_twos(w, bits)) == w);
    CHECK(n == (1 << bits));
  }
}

TEST_CASE("ternary cells") {
  CHECK(encode_ternary(1) == TernaryCells{0, 1});
  CHECK(encode_ternary(-1) == TernaryCells{1, 0});
  CHECK(encode_ternary(0) == TernaryCells{0, 0});
  CHECK_THROWS_AS(encode_ternary(2), Error);
  CHECK_THROWS_AS(decode_ternary(TernaryCells{1, 1}), Error);
  for (int bits : {2, 3, 5}) {
    CHECK(encode_ternary_planes(0, bits).size() == static_cast<size_t>(bits - 1));
    for (int w = -ternary_max(bits); w <= ternary_max(bits); ++w)
      CHECK(decode_ternary_planes(encode_ternary_planes(w, bits)) == w);
    CHECK_THROWS_AS(encode_ternary_planes(ternary_max(bits) + 1, bits), Error);
  }
}

TEST_CASE("layer validation") {
  auto l = lenet5_topology()[1];
  l.adc_mode = AdcMode::single;
  CHECK_THROWS_AS(validate(l), Error);
  auto t = lenet5_topology()[0];
  t.weight_bitwidth = 3;
  CHECK_THROWS_AS(validate(t), Error);
  for (const auto& s : lenet5_topology()) CHECK_NOTHROW(validate(s));
  for (const auto& s : resnet20_topology()) CHECK_NOTHROW(validate(s));
}

TEST_CASE("lenet-5 occupied rows, cycles and a single macro") {
  const auto m = map_network(lenet5_topology(), G);
  std::vector<int> rows;
  for (const auto& l : m.layers) rows.push_back(l.occupied_rows_per_slice);
  CHECK(rows == std::vector<int>{1, 1, 4, 1});
  CHECK(m.macros == 1);
  CHECK(m.layers[0].positions == 576);
  CHECK(m.layers[0].cycles_per_pass == 576);
  CHECK(m.layers[0].nibble_passes == 2);
  CHECK(m.layers[0].mac_cycles == 1152);
  CHECK(m.layers[2].cycles_per_pass == 4);
  CHECK(m.layers[2].mac_cycles == 4);
  const auto st = storage_report(m, G);
  CHECK(st.macros == 1);
  CHECK(st.utilization > 0);
  CHECK(st.utilization <= 100);
}

TEST_CASE("resnet-20 groups and the two-macro layers") {
  const auto specs = resnet20_topology();
  REQUIRE(specs.size() == 19);
  std::vector<int> group_rows;
  for (const auto& g : resnet20_groups()) {
    int r = 0;
    for (int i = g.first; i <= g.last; ++i)
      r = std::max(r, map_layer(specs[static_cast<size_t>(i)], G).occupied_rows_per_slice);
    group_rows.push_back(r);
  }
  CHECK(group_rows == std::vector<int>{2, 4, 4, 8});
  for (int i = 14; i < 19; ++i) CHECK(map_layer(specs[static_cast<size_t>(i)], G).macros_needed == 2);
  for (int i = 0; i < 14; ++i) CHECK(map_layer(specs[static_cast<size_t>(i)], G).macros_needed == 1);
  const auto st = storage_report(map_network(specs, G), G);
  CHECK(st.macros > 1);
}

TEST_CASE("1x1 conv schedule and empty network") {
  const auto m = map_layer(conv1x1(4, 8), G);
  CHECK(m.occupied_rows_per_slice == 1);
  CHECK(m.mac_cycles == 64);
  const auto st = storage_report(NetworkMapping{}, G);
  CHECK(st.utilization == 0.0);
  CHECK(st.cells_used == 0);
}

TEST_CASE("mapping is lossless and never shares a cell") {
  std::mt19937_64 rng(17);
  for (const auto& specs : {lenet5_topology(), resnet20_topology()}) {
    const auto m = map_network(specs, G);
    MacroImage image(G, m.macros);
    for (size_t i = 0; i < specs.size(); ++i) {
      const auto w = random_weights(specs[i], rng);
      // set() throws if a cell is claimed twice
      REQUIRE_NOTHROW(program_layer(image, m.layers[i], w, G, static_cast<int>(i)));
      CHECK(decode_layer(image, m.layers[i], G) == w);
    }
  }
}

TEST_CASE("cell ownership tuples are unique") {
  const auto m = map_network(lenet5_topology(), G);
  std::set<std::tuple<int, int, int, int>> cells;
  long expected = 0;
  for (const auto& L : m.layers) {
    for (const auto& p : L.placements) {
      for (int plane = 0; plane < p.planes; ++plane) {
        const int s = p.slice_of_plane(plane);
        for (int col = 0; col < p.length; ++col) {
          CHECK(cells.insert({p.macro, s, p.row, col}).second);
          ++expected;
          if (L.spec.encoding == Encoding::ternary) {
            CHECK(cells.insert({p.macro, s + 1, p.row, col}).second);
            ++expected;
          }
        }
      }
    }
    CHECK(L.cells_used() > 0);
  }
  CHECK(static_cast<long>(cells.size()) == expected);
}

TEST_CASE("double programming a cell is an invariant violation") {
  MacroImage image(G, 1);
  image.set(0, 3, 2, 5, 1, 0);
  try {
    image.set(0, 3, 2, 5, 0, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invariant);
  }
}

TEST_CASE("ternary costs 2k-2 cells and k-1 conversions") {
  for (int k : {2, 3, 5}) {
    LayerSpec l;
    l.name = "t";
    l.kind = LayerKind::fc;
    l.in_channels = 100;
    l.out_channels = 3;
    l.weight_bitwidth = k;
    l.encoding = Encoding::ternary;
    l.adc_mode = AdcMode::differential;
    const auto m = map_layer(l, G);
    CHECK(m.cells_used() == 3L * 100 * (2 * k - 2));
    CHECK(m.planes == k - 1);
  }
}

TEST_CASE("bit planes of a weight sit in neighbouring slices of one polarity") {
  const auto m = map_layer(lenet5_topology()[0], G);
  for (const auto& p : m.placements) {
    for (int plane = 1; plane < p.planes; ++plane) CHECK(p.slice_of_plane(plane) - p.slice_of_plane(plane - 1) == 2);
    CHECK(p.slice_of_plane(0) % 2 == p.half);
  }
  const auto t = map_layer(lenet5_topology()[1], G);
  for (const auto& p : t.placements) CHECK(p.slice_of_plane(0) % 2 == 0);
}

TEST_CASE("filter permutation leaves the schedule alone and permutes the stored filters") {
  std::mt19937_64 rng(4);
  const auto spec = lenet5_topology()[2];
  const auto m = map_layer(spec, G);
  const auto w = random_weights(spec, rng);
  std::vector<int> perm(static_cast<size_t>(spec.out_channels));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int8_t> wp(w.size());
  const size_t fan = static_cast<size_t>(spec.fan_in());
  for (size_t f = 0; f < perm.size(); ++f)
    std::copy_n(w.begin() + static_cast<long>(perm[f] * fan), fan, wp.begin() + static_cast<long>(f * fan));
  MacroImage a(G, 1), b(G, 1);
  program_layer(a, m, w, G, 0);
  program_layer(b, m, wp, G, 0);
  CHECK(decode_layer(b, m, G) == wp);
  CHECK(schedule(NetworkMapping{{m}, 1}).total_mac_cycles == m.mac_cycles);
}

TEST_CASE("oversized filters split into 128-weight chunks") {
  const auto c3 = map_layer(lenet5_topology()[1], G);  // 125 weights
  CHECK(c3.chunks_per_filter == 1);
  const auto f5 = map_layer(lenet5_topology()[2], G);  // 256 weights
  CHECK(f5.chunks_per_filter == 2);
  CHECK(f5.at(3, 1).length == 128);
  const auto l2 = map_layer(resnet20_topology()[1], G);  // 252 weights
  CHECK(l2.chunks_per_filter == 2);
  CHECK(l2.at(0, 1).length == 252 - 128);
}

TEST_CASE("manifests match the golden files") {
  for (const auto& [name, specs] : {std::pair{"lenet5", lenet5_topology()}, std::pair{"resnet20", resnet20_topology()}}) {
    const auto bytes = read_file(std::string(CIMSIM_TEST_DATA) + "/golden/" + name + "_mapping.json");
    const auto golden = json::parse(bytes.begin(), bytes.end());
    const auto got = json::parse(mapping_manifest_json(map_network(specs, G), G));
    CHECK(got == golden);
  }
}
