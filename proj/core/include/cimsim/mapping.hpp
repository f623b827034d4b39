#pragma once

#include "cimsim/cisar_adc.hpp"
#include "cimsim/digital_periphery.hpp"
#include "cimsim/macro_config.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cimsim {

enum class LayerKind { conv, fc };
std::string_view to_string(LayerKind k);
LayerKind layer_kind_from_string(std::string_view s);
std::string_view to_string(AdcMode m);
AdcMode adc_mode_from_string(std::string_view s);

// Shape and precision of one layer. A fully connected layer is a 1x1
// convolution over a 1x1 input with in_channels = in_features.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int kernel = 1;
  int in_channels = 1;
  int out_channels = 1;
  int input_height = 1;
  int input_width = 1;
  int stride = 1;
  int padding = 0;
  int input_bitwidth = 4;
  int weight_bitwidth = 4;
  Encoding encoding = Encoding::twos_complement;
  AdcMode adc_mode = AdcMode::single;
  int pool = 1;  // max-pool window applied after requantization (1 = none)

  int fan_in() const { return kernel * kernel * in_channels; }
  int output_height() const;
  int output_width() const;
  long positions() const { return static_cast<long>(output_height()) * output_width(); }
  // Input nibble passes: 1 for inputs up to 4 bits, 2 for 5..8 bits.
  int nibble_passes() const;
};

// Throws ErrorKind::unsupported / input_domain for layers the macro cannot run.
void validate(const LayerSpec& layer);

// MSB first. planes[0] carries weight -2^(bits-1) except for 1-bit weights,
// which are unsigned.
struct BitPlanes {
  std::vector<uint8_t> planes;
  bool msb_negative = true;
};
BitPlanes encode_twos(int w, int bits);
int decode_twos(const BitPlanes& b);
int twos_min(int bits);
int twos_max(int bits);

// Cell contents of one trit across a slice pair: `minus` sits in the "-"
// slice, `plus` in the "+" slice. +1 -> (0,1), -1 -> (1,0), 0 -> (0,0).
struct TernaryCells {
  uint8_t minus = 0;
  uint8_t plus = 0;
  bool operator==(const TernaryCells&) const = default;
};
TernaryCells encode_ternary(int w);
int decode_ternary(TernaryCells c);
// Multi-trit weights: sign times the binary magnitude, one trit per plane,
// LSB plane first. bits = 2,3,5 gives 1,2,4 trits.
std::vector<TernaryCells> encode_ternary_planes(int w, int bits);
int decode_ternary_planes(const std::vector<TernaryCells>& trits);
int ternary_max(int bits);

// Placement of one 128-weight chunk of one filter.
struct ChunkPlacement {
  int filter = 0;
  int chunk = 0;
  int macro = 0;
  int row = 0;         // cell index inside each cluster, 0..cells_per_cluster-1
  int half = 0;        // single mode: 0 uses "+" slices, 1 uses "-" slices; differential: -1
  int first_slot = 0;  // single: slot s maps to slice 2s+half; differential: pair index
  int planes = 0;
  int length = 0;      // weights in this chunk, <= clusters_per_slice
  // Slice that stores weight plane p (LSB = 0). Differential: the "+" slice
  // of the pair; its partner is slice + 1.
  int slice_of_plane(int p) const;
  int adc_of_plane(int p) const;
};

struct LayerMapping {
  LayerSpec spec;
  int planes = 0;
  int tree_level = 0;
  int chunks_per_filter = 0;
  int start_row = 0;  // global row (macro * cells_per_cluster + row)
  int rows_total = 0;
  int occupied_rows_per_slice = 0;  // most rows used in any one macro
  int first_macro = 0;
  int macros_needed = 0;
  int conversions_per_position = 0;  // row passes, max over the macros running in parallel
  long positions = 0;
  long cycles_per_pass = 0;
  int nibble_passes = 1;
  long mac_cycles = 0;
  std::vector<ChunkPlacement> placements;  // filter-major, chunk-minor

  const ChunkPlacement& at(int filter, int chunk) const;
  std::vector<int> slices_used() const;
  long cells_used() const;
};

// Places a layer starting at global row `start_row`. Bit planes of one weight
// go to neighbouring slices of one polarity (or neighbouring pairs); the
// same weight index of one filter shares a row; filters longer than a slice
// are split into chunks that run as separate filters; rows past the macro
// spill into the next macro.
LayerMapping map_layer(const LayerSpec& layer, const MacroGeometry& g, int start_row = 0);

struct NetworkMapping {
  std::vector<LayerMapping> layers;
  int macros = 0;
};

// Packs layers one after another. A layer that does not fit in the rows left
// in the current macro starts on a fresh macro.
NetworkMapping map_network(const std::vector<LayerSpec>& layers, const MacroGeometry& g);

struct ScheduleEntry {
  std::string name;
  long positions = 0;
  int conversions_per_position = 0;
  long cycles_per_pass = 0;
  int nibble_passes = 1;
  long mac_cycles = 0;
};
struct Schedule {
  std::vector<ScheduleEntry> layers;
  long total_cycles_per_pass = 0;
  long total_mac_cycles = 0;
};
Schedule schedule(const NetworkMapping& m);

struct StorageReport {
  long cluster_rows_used = 0;   // (slice, row) pairs holding any weight
  long cluster_rows_total = 0;  // over the macros needed
  long cells_used = 0;
  int macros = 0;
  double utilization = 0.0;     // percent
};
StorageReport storage_report(const NetworkMapping& m, const MacroGeometry& g);

// Bit contents of the macros holding a network.
class MacroImage {
 public:
  MacroImage(const MacroGeometry& g, int macros);
  int macros() const { return macros_; }
  uint8_t get(int macro, int slice, int row, int col) const { return cells_[index(macro, slice, row, col)]; }
  // Throws ErrorKind::invariant if the cell already holds another weight bit.
  void set(int macro, int slice, int row, int col, uint8_t bit, int owner);
  // Row `row` of one slice, one byte per cluster.
  std::vector<uint8_t> row_bits(int macro, int slice, int row) const;

 private:
  size_t index(int macro, int slice, int row, int col) const;
  MacroGeometry g_;
  int macros_;
  std::vector<uint8_t> cells_;
  std::vector<int> owner_;
};

// Writes the weights of one layer (row-major [out][fan_in]) into the image.
void program_layer(MacroImage& image, const LayerMapping& m, const std::vector<int8_t>& weights,
                   const MacroGeometry& g, int owner);
// Reads them back.
std::vector<int8_t> decode_layer(const MacroImage& image, const LayerMapping& m, const MacroGeometry& g);

std::string mapping_manifest_json(const NetworkMapping& m, const MacroGeometry& g);

// Layer shapes of the two reference networks.
std::vector<LayerSpec> lenet5_topology();
std::vector<LayerSpec> resnet20_topology();
// Table groups of the ResNet-20 topology: {label, first layer, last layer}, 0-based.
struct LayerGroup {
  std::string label;
  int first = 0;
  int last = 0;
};
std::vector<LayerGroup> resnet20_groups();

}  // namespace cimsim
