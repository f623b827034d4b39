#include "cimsim/mapping.hpp"

#include "cimsim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

namespace cimsim {

using nlohmann::json;

std::string_view to_string(LayerKind k) { return k == LayerKind::fc ? "fc" : "conv"; }

LayerKind layer_kind_from_string(std::string_view s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "fc") return LayerKind::fc;
  throw Error(ErrorKind::data, "unknown layer kind: " + std::string(s));
}

std::string_view to_string(AdcMode m) { return m == AdcMode::differential ? "differential" : "single"; }

AdcMode adc_mode_from_string(std::string_view s) {
  if (s == "single") return AdcMode::single;
  if (s == "differential") return AdcMode::differential;
  throw Error(ErrorKind::data, "unknown adc mode: " + std::string(s));
}

int LayerSpec::output_height() const { return (input_height + 2 * padding - kernel) / stride + 1; }
int LayerSpec::output_width() const { return (input_width + 2 * padding - kernel) / stride + 1; }
int LayerSpec::nibble_passes() const { return input_bitwidth <= 4 ? 1 : 2; }

void validate(const LayerSpec& l) {
  auto bad = [&](const std::string& what) { throw Error(ErrorKind::input_domain, l.name + ": " + what); };
  if (l.kernel < 1 || l.in_channels < 1 || l.out_channels < 1) bad("kernel and channel counts must be >= 1");
  if (l.stride < 1 || l.padding < 0) bad("bad stride or padding");
  if (l.input_height < 1 || l.input_width < 1) bad("bad input size");
  if (l.input_height + 2 * l.padding < l.kernel || l.input_width + 2 * l.padding < l.kernel)
    bad("kernel larger than padded input");
  if (l.input_bitwidth < 1 || l.input_bitwidth > 8) bad("input bitwidth must be 1..8");
  if (l.pool < 1) bad("pool must be >= 1");
  if (l.kind == LayerKind::fc && (l.kernel != 1 || l.input_height != 1 || l.input_width != 1 || l.padding != 0))
    bad("fc layers are 1x1 over a 1x1 input");
  tree_level_for(l.weight_bitwidth, l.encoding);
  if (l.encoding == Encoding::ternary && l.adc_mode != AdcMode::differential)
    throw Error(ErrorKind::unsupported, l.name + ": ternary weights need differential mode");
  if (l.encoding == Encoding::twos_complement && l.adc_mode != AdcMode::single)
    throw Error(ErrorKind::unsupported, l.name + ": 2's complement weights run in single-ended mode");
}

int twos_min(int bits) { return bits == 1 ? 0 : -(1 << (bits - 1)); }
int twos_max(int bits) { return bits == 1 ? 1 : (1 << (bits - 1)) - 1; }

BitPlanes encode_twos(int w, int bits) {
  if (bits < 1 || bits > 8) throw Error(ErrorKind::input_domain, "encode_twos: bits must be 1..8");
  if (w < twos_min(bits) || w > twos_max(bits))
    throw Error(ErrorKind::input_domain, "encode_twos: " + std::to_string(w) + " overflows " + std::to_string(bits) +
                                             " bits");
  BitPlanes b;
  b.msb_negative = bits > 1;
  const unsigned u = static_cast<unsigned>(w) & ((1u << bits) - 1);
  for (int i = 0; i < bits; ++i) b.planes.push_back(static_cast<uint8_t>((u >> (bits - 1 - i)) & 1u));
  return b;
}

int decode_twos(const BitPlanes& b) {
  const int bits = static_cast<int>(b.planes.size());
  int v = 0;
  for (int i = 0; i < bits; ++i) v = 2 * v + (b.planes[i] & 1);
  if (b.msb_negative && bits > 0 && b.planes[0]) v -= 1 << bits;
  return v;
}

TernaryCells encode_ternary(int w) {
  switch (w) {
    case 1: return {0, 1};
    case -1: return {1, 0};
    case 0: return {0, 0};
  }
  throw Error(ErrorKind::input_domain, "encode_ternary: " + std::to_string(w) + " is not a trit");
}

int decode_ternary(TernaryCells c) {
  if (c.minus && c.plus) throw Error(ErrorKind::invariant, "decode_ternary: both cells set");
  return static_cast<int>(c.plus) - static_cast<int>(c.minus);
}

int ternary_max(int bits) { return (1 << (bits - 1)) - 1; }

std::vector<TernaryCells> encode_ternary_planes(int w, int bits) {
  const int trits = weight_planes(bits, Encoding::ternary);
  if (std::abs(w) > ternary_max(bits))
    throw Error(ErrorKind::input_domain, "encode_ternary_planes: " + std::to_string(w) + " overflows " +
                                             std::to_string(bits) + "-bit ternary");
  const int sign = w < 0 ? -1 : 1;
  const int mag = std::abs(w);
  std::vector<TernaryCells> out;
  for (int p = 0; p < trits; ++p) out.push_back(encode_ternary(((mag >> p) & 1) * sign));
  return out;
}

int decode_ternary_planes(const std::vector<TernaryCells>& trits) {
  int v = 0;
  for (size_t p = 0; p < trits.size(); ++p) v += decode_ternary(trits[p]) * (1 << p);
  return v;
}

int ChunkPlacement::slice_of_plane(int p) const {
  if (half < 0) return 2 * (first_slot + p);
  return 2 * (first_slot + p) + half;
}

int ChunkPlacement::adc_of_plane(int p) const { return first_slot + p; }

const ChunkPlacement& LayerMapping::at(int filter, int chunk) const {
  const size_t i = static_cast<size_t>(filter) * chunks_per_filter + chunk;
  if (filter < 0 || chunk < 0 || chunk >= chunks_per_filter || i >= placements.size())
    throw Error(ErrorKind::contract, "LayerMapping::at: no such chunk");
  return placements[i];
}

std::vector<int> LayerMapping::slices_used() const {
  std::set<int> s;
  for (const auto& c : placements)
    for (int p = 0; p < c.planes; ++p) {
      s.insert(c.slice_of_plane(p));
      if (spec.adc_mode == AdcMode::differential) s.insert(c.slice_of_plane(p) + 1);
    }
  return {s.begin(), s.end()};
}

long LayerMapping::cells_used() const {
  long n = 0;
  for (const auto& c : placements) n += static_cast<long>(c.length) * c.planes;
  return spec.adc_mode == AdcMode::differential ? 2 * n : n;
}

LayerMapping map_layer(const LayerSpec& layer, const MacroGeometry& g, int start_row) {
  validate(layer);
  if (start_row < 0) throw Error(ErrorKind::input_domain, "map_layer: negative start row");

  LayerMapping m;
  m.spec = layer;
  m.planes = weight_planes(layer.weight_bitwidth, layer.encoding);
  m.tree_level = tree_level_for(layer.weight_bitwidth, layer.encoding);
  m.chunks_per_filter = (layer.fan_in() + g.clusters_per_slice - 1) / g.clusters_per_slice;
  m.start_row = start_row;
  m.nibble_passes = layer.nibble_passes();
  m.positions = layer.kind == LayerKind::fc ? 1 : layer.positions();

  const bool single = layer.adc_mode == AdcMode::single;
  // Slots in one placement unit: a half row (one polarity) in single mode, a
  // whole row of pairs in differential mode. Either way one unit is one
  // conversion event.
  const int slots = g.slice_pairs;
  if (m.planes > slots) throw Error(ErrorKind::unsupported, layer.name + ": more weight planes than ADCs");
  const int per_unit = slots / m.planes;
  const int units_per_row = single ? 2 : 1;

  std::vector<ChunkPlacement> by_chunk;
  int unit = 0, used = 0;
  for (int c = 0; c < m.chunks_per_filter; ++c) {
    // Chunk groups see different input vectors, so each group opens a fresh unit.
    if (used > 0) {
      ++unit;
      used = 0;
    }
    const int length = std::min(g.clusters_per_slice, layer.fan_in() - c * g.clusters_per_slice);
    for (int f = 0; f < layer.out_channels; ++f) {
      if (used == per_unit) {
        ++unit;
        used = 0;
      }
      const int global_row = start_row + unit / units_per_row;
      ChunkPlacement p;
      p.filter = f;
      p.chunk = c;
      p.macro = global_row / g.cells_per_cluster;
      p.row = global_row % g.cells_per_cluster;
      p.half = single ? unit % 2 : -1;
      p.first_slot = used * m.planes;
      p.planes = m.planes;
      p.length = length;
      by_chunk.push_back(p);
      ++used;
    }
  }

  std::map<int, std::set<int>> rows_in_macro, units_in_macro;
  int max_row = -1;
  for (const auto& p : by_chunk) {
    rows_in_macro[p.macro].insert(p.row);
    units_in_macro[p.macro].insert(p.row * 2 + std::max(p.half, 0));
    max_row = std::max(max_row, p.macro * g.cells_per_cluster + p.row);
  }
  m.rows_total = max_row - start_row + 1;
  m.first_macro = start_row / g.cells_per_cluster;
  m.macros_needed = static_cast<int>(rows_in_macro.size());
  for (const auto& [macro, rows] : rows_in_macro)
    m.occupied_rows_per_slice = std::max(m.occupied_rows_per_slice, static_cast<int>(rows.size()));
  // Macros run in parallel, each stepping through its own units.
  for (const auto& [macro, units] : units_in_macro)
    m.conversions_per_position = std::max(m.conversions_per_position, static_cast<int>(units.size()));
  m.cycles_per_pass = m.positions * m.conversions_per_position;
  m.mac_cycles = m.cycles_per_pass * m.nibble_passes;

  m.placements.resize(by_chunk.size());
  for (const auto& p : by_chunk) m.placements[static_cast<size_t>(p.filter) * m.chunks_per_filter + p.chunk] = p;
  return m;
}

NetworkMapping map_network(const std::vector<LayerSpec>& layers, const MacroGeometry& g) {
  NetworkMapping n;
  int cursor = 0;
  for (const auto& l : layers) {
    const int rows = map_layer(l, g, 0).rows_total;
    const int offset = cursor % g.cells_per_cluster;
    if (offset != 0 && offset + rows > g.cells_per_cluster) cursor += g.cells_per_cluster - offset;
    n.layers.push_back(map_layer(l, g, cursor));
    cursor += rows;
  }
  n.macros = (cursor + g.cells_per_cluster - 1) / g.cells_per_cluster;
  return n;
}

Schedule schedule(const NetworkMapping& m) {
  Schedule s;
  for (const auto& l : m.layers) {
    if (l.placements.empty()) throw Error(ErrorKind::contract, "schedule: layer " + l.spec.name + " is not mapped");
    s.layers.push_back({l.spec.name, l.positions, l.conversions_per_position, l.cycles_per_pass, l.nibble_passes,
                        l.mac_cycles});
    s.total_cycles_per_pass += l.cycles_per_pass;
    s.total_mac_cycles += l.mac_cycles;
  }
  return s;
}

StorageReport storage_report(const NetworkMapping& m, const MacroGeometry& g) {
  StorageReport r;
  std::set<std::tuple<int, int, int>> used;
  for (const auto& l : m.layers) {
    r.cells_used += l.cells_used();
    for (const auto& c : l.placements)
      for (int p = 0; p < c.planes; ++p) {
        used.emplace(c.macro, c.slice_of_plane(p), c.row);
        if (l.spec.adc_mode == AdcMode::differential) used.emplace(c.macro, c.slice_of_plane(p) + 1, c.row);
      }
  }
  r.macros = m.macros;
  r.cluster_rows_used = static_cast<long>(used.size());
  r.cluster_rows_total = static_cast<long>(m.macros) * g.slices * g.cells_per_cluster;
  r.utilization = r.cluster_rows_total == 0 ? 0.0 : 100.0 * r.cluster_rows_used / r.cluster_rows_total;
  return r;
}

MacroImage::MacroImage(const MacroGeometry& g, int macros) : g_(g), macros_(macros) {
  if (macros < 0) throw Error(ErrorKind::input_domain, "MacroImage: negative macro count");
  const size_t n = static_cast<size_t>(macros) * g.slices * g.cells_per_cluster * g.clusters_per_slice;
  cells_.assign(n, 0);
  owner_.assign(n, -1);
}

size_t MacroImage::index(int macro, int slice, int row, int col) const {
  if (macro < 0 || macro >= macros_ || slice < 0 || slice >= g_.slices || row < 0 || row >= g_.cells_per_cluster ||
      col < 0 || col >= g_.clusters_per_slice)
    throw Error(ErrorKind::contract, "MacroImage: cell address out of range");
  return ((static_cast<size_t>(macro) * g_.slices + slice) * g_.cells_per_cluster + row) * g_.clusters_per_slice + col;
}

void MacroImage::set(int macro, int slice, int row, int col, uint8_t bit, int owner) {
  const size_t i = index(macro, slice, row, col);
  if (owner_[i] != -1)
    throw Error(ErrorKind::invariant, "MacroImage: cell already written by owner " + std::to_string(owner_[i]));
  owner_[i] = owner;
  cells_[i] = bit & 1u;
}

std::vector<uint8_t> MacroImage::row_bits(int macro, int slice, int row) const {
  const size_t i = index(macro, slice, row, 0);
  return {cells_.begin() + static_cast<long>(i), cells_.begin() + static_cast<long>(i) + g_.clusters_per_slice};
}

void program_layer(MacroImage& image, const LayerMapping& m, const std::vector<int8_t>& weights,
                   const MacroGeometry& g, int owner) {
  const int fan_in = m.spec.fan_in();
  if (weights.size() != static_cast<size_t>(fan_in) * m.spec.out_channels)
    throw Error(ErrorKind::contract, "program_layer: weight count does not match " + m.spec.name);
  const int bits = m.spec.weight_bitwidth;
  for (const auto& c : m.placements)
    for (int i = 0; i < c.length; ++i) {
      const int w = weights[static_cast<size_t>(c.filter) * fan_in + c.chunk * g.clusters_per_slice + i];
      if (m.spec.encoding == Encoding::twos_complement) {
        const auto b = encode_twos(w, bits);
        for (int p = 0; p < c.planes; ++p)
          image.set(c.macro, c.slice_of_plane(p), c.row, i, b.planes[static_cast<size_t>(bits - 1 - p)], owner);
      } else {
        const auto t = encode_ternary_planes(w, bits);
        for (int p = 0; p < c.planes; ++p) {
          image.set(c.macro, c.slice_of_plane(p), c.row, i, t[static_cast<size_t>(p)].plus, owner);
          image.set(c.macro, c.slice_of_plane(p) + 1, c.row, i, t[static_cast<size_t>(p)].minus, owner);
        }
      }
    }
}

std::vector<int8_t> decode_layer(const MacroImage& image, const LayerMapping& m, const MacroGeometry& g) {
  const int fan_in = m.spec.fan_in();
  const int bits = m.spec.weight_bitwidth;
  std::vector<int8_t> out(static_cast<size_t>(fan_in) * m.spec.out_channels, 0);
  for (const auto& c : m.placements)
    for (int i = 0; i < c.length; ++i) {
      int w = 0;
      if (m.spec.encoding == Encoding::twos_complement) {
        BitPlanes b;
        b.msb_negative = bits > 1;
        b.planes.resize(static_cast<size_t>(bits));
        for (int p = 0; p < c.planes; ++p)
          b.planes[static_cast<size_t>(bits - 1 - p)] = image.get(c.macro, c.slice_of_plane(p), c.row, i);
        w = decode_twos(b);
      } else {
        std::vector<TernaryCells> t(static_cast<size_t>(c.planes));
        for (int p = 0; p < c.planes; ++p) {
          t[static_cast<size_t>(p)].plus = image.get(c.macro, c.slice_of_plane(p), c.row, i);
          t[static_cast<size_t>(p)].minus = image.get(c.macro, c.slice_of_plane(p) + 1, c.row, i);
        }
        w = decode_ternary_planes(t);
      }
      out[static_cast<size_t>(c.filter) * fan_in + c.chunk * g.clusters_per_slice + i] = static_cast<int8_t>(w);
    }
  return out;
}

std::string mapping_manifest_json(const NetworkMapping& m, const MacroGeometry& g) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"name", l.spec.name},
                      {"kind", to_string(l.spec.kind)},
                      {"encoding", to_string(l.spec.encoding)},
                      {"adc_mode", to_string(l.spec.adc_mode)},
                      {"weight_bitwidth", l.spec.weight_bitwidth},
                      {"input_bitwidth", l.spec.input_bitwidth},
                      {"tree_level", l.tree_level},
                      {"planes", l.planes},
                      {"chunks_per_filter", l.chunks_per_filter},
                      {"start_row", l.start_row},
                      {"rows", l.rows_total},
                      {"occupied_rows_per_slice", l.occupied_rows_per_slice},
                      {"first_macro", l.first_macro},
                      {"macros_needed", l.macros_needed},
                      {"slices", l.slices_used()},
                      {"positions", l.positions},
                      {"conversions_per_position", l.conversions_per_position},
                      {"cycles_per_pass", l.cycles_per_pass},
                      {"nibble_passes", l.nibble_passes},
                      {"cycles", l.mac_cycles}});
  }
  const auto st = storage_report(m, g);
  json j = {{"format", "cimsim-mapping"},
            {"version", 1},
            {"geometry", {{"rows", g.rows}, {"cols", g.cols}, {"cells_per_cluster", g.cells_per_cluster},
                          {"slices", g.slices}, {"slice_pairs", g.slice_pairs}}},
            {"macros", m.macros},
            {"utilization_percent", st.utilization},
            {"layers", layers}};
  return j.dump(2);
}

namespace {

LayerSpec conv(std::string name, int k, int cin, int cout, int hw, int stride, int pad, int in_bits, int w_bits,
               Encoding enc, AdcMode mode, int pool = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv;
  l.kernel = k;
  l.in_channels = cin;
  l.out_channels = cout;
  l.input_height = l.input_width = hw;
  l.stride = stride;
  l.padding = pad;
  l.input_bitwidth = in_bits;
  l.weight_bitwidth = w_bits;
  l.encoding = enc;
  l.adc_mode = mode;
  l.pool = pool;
  return l;
}

LayerSpec fc(std::string name, int in, int out, int in_bits, int w_bits, Encoding enc, AdcMode mode) {
  LayerSpec l = conv(std::move(name), 1, in, out, 1, 1, 0, in_bits, w_bits, enc, mode);
  l.kind = LayerKind::fc;
  return l;
}

}  // namespace

std::vector<LayerSpec> lenet5_topology() {
  constexpr auto T = Encoding::ternary;
  constexpr auto D = AdcMode::differential;
  return {conv("C1", 5, 1, 5, 28, 1, 0, 8, 4, Encoding::twos_complement, AdcMode::single, 2),
          conv("C3", 5, 5, 16, 12, 1, 0, 4, 2, T, D, 2),
          fc("F5", 256, 64, 4, 2, T, D),
          fc("F6", 64, 10, 4, 2, T, D)};
}

std::vector<LayerSpec> resnet20_topology() {
  constexpr auto E = Encoding::twos_complement;
  constexpr auto S = AdcMode::single;
  std::vector<LayerSpec> v;
  v.push_back(conv("L1", 3, 3, 28, 32, 1, 1, 8, 4, E, S));
  for (int i = 2; i <= 7; ++i) v.push_back(conv("L" + std::to_string(i), 3, 28, 28, 32, 1, 1, 4, 4, E, S));
  v.push_back(conv("L8", 3, 28, 28, 32, 2, 1, 4, 4, E, S));
  for (int i = 9; i <= 13; ++i) v.push_back(conv("L" + std::to_string(i), 3, 28, 28, 16, 1, 1, 4, 4, E, S));
  v.push_back(conv("L14", 3, 28, 56, 16, 2, 1, 4, 4, E, S));
  for (int i = 15; i <= 19; ++i) v.push_back(conv("L" + std::to_string(i), 3, 56, 56, 8, 1, 1, 4, 4, E, S));
  return v;
}

std::vector<LayerGroup> resnet20_groups() {
  return {{"Layer 1", 0, 0}, {"Layer 2-7", 1, 6}, {"Layer 8-13", 7, 12}, {"Layer 14-19", 13, 18}};
}

}  // namespace cimsim
