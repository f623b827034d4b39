#pragma once

#include "cimsim/cisar_adc.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace cimsim {

enum class Encoding { twos_complement, ternary };

std::string_view to_string(Encoding e);
Encoding encoding_from_string(std::string_view s);

// One zero-referenced partial MAC, indexed by weight bit plane p and input
// nibble q.
struct PartialSum {
  long value = 0;
  int weight_bit_index = 0;
  int input_nibble_index = 0;
};

struct TreeConfig {
  int output_level = 0;  // 2^level slices are combined
  Encoding encoding = Encoding::twos_complement;
};

// Zero-references an ADC code and reverses the sign of the MSB plane of a
// 2's complement weight.
PartialSum sign_transform(const AdcCode& code, bool is_msb_plane, Encoding enc, int p = 0, int q = 0);
// Same on an already zero-referenced value (pass-through or calibrated path).
PartialSum sign_transform(long zero_referenced, bool is_msb_plane, Encoding enc, int p = 0, int q = 0);

// Two-cycle accumulation of 4-bit input nibbles: high * 16 + low.
long accumulate_nibbles(const PartialSum& low, const PartialSum& high);

// Shift-and-add over weight planes. For 2's complement the MSB partial must
// already be sign reversed; for ternary each partial is a differential ADC
// result.
long tree_combine(std::span<const long> partials, const TreeConfig& cfg);

// Weight bitwidth handled at an adder-tree output level. Throws
// ErrorKind::unsupported for ternary at level 0.
int supported_bitwidth(int level, Encoding enc);
std::vector<int> supported_bitwidths(Encoding enc);
// Inverse of supported_bitwidth; throws for bitwidths the tree cannot form.
int tree_level_for(int weight_bitwidth, Encoding enc);
// Number of weight planes (slices for 2's complement, slice pairs for ternary).
int weight_planes(int weight_bitwidth, Encoding enc);

}  // namespace cimsim
