#include "cimsim/digital_periphery.hpp"

#include "cimsim/error.hpp"

#include <string>

namespace cimsim {

std::string_view to_string(Encoding e) { return e == Encoding::ternary ? "ternary" : "twos_complement"; }

Encoding encoding_from_string(std::string_view s) {
  if (s == "ternary") return Encoding::ternary;
  if (s == "twos_complement" || s == "twos") return Encoding::twos_complement;
  throw Error(ErrorKind::data, "unknown encoding: " + std::string(s));
}

PartialSum sign_transform(long zero_referenced, bool is_msb_plane, Encoding enc, int p, int q) {
  // The hardware negates as ~x + 1 with the +1 folded into the accumulator
  // adder; at value level that is plain negation.
  const bool negate = is_msb_plane && enc == Encoding::twos_complement;
  return PartialSum{negate ? -zero_referenced : zero_referenced, p, q};
}

PartialSum sign_transform(const AdcCode& code, bool is_msb_plane, Encoding enc, int p, int q) {
  return sign_transform(static_cast<long>(code.value()), is_msb_plane, enc, p, q);
}

long accumulate_nibbles(const PartialSum& low, const PartialSum& high) {
  if (low.input_nibble_index != 0 || high.input_nibble_index != 1)
    throw Error(ErrorKind::contract, "accumulate_nibbles: expected nibble indices (0, 1)");
  return high.value * 16 + low.value;
}

int supported_bitwidth(int level, Encoding enc) {
  if (level < 0 || level > 3) throw Error(ErrorKind::unsupported, "adder tree level must be 0..3");
  if (enc == Encoding::twos_complement) return 1 << level;
  if (level == 0) throw Error(ErrorKind::unsupported, "ternary encoding needs tree level >= 1");
  return (1 << (level - 1)) + 1;
}

std::vector<int> supported_bitwidths(Encoding enc) {
  if (enc == Encoding::twos_complement) return {1, 2, 4, 8};
  return {2, 3, 5};
}

int tree_level_for(int weight_bitwidth, Encoding enc) {
  for (int level = enc == Encoding::ternary ? 1 : 0; level <= 3; ++level)
    if (supported_bitwidth(level, enc) == weight_bitwidth) return level;
  throw Error(ErrorKind::unsupported, "weight bitwidth " + std::to_string(weight_bitwidth) + " not supported for " +
                                          std::string(to_string(enc)));
}

int weight_planes(int weight_bitwidth, Encoding enc) {
  tree_level_for(weight_bitwidth, enc);
  return enc == Encoding::ternary ? weight_bitwidth - 1 : weight_bitwidth;
}

long tree_combine(std::span<const long> partials, const TreeConfig& cfg) {
  const int level = cfg.output_level;
  supported_bitwidth(level, cfg.encoding);
  // 2's complement: one slice per bit. Ternary: one differential pair per
  // trit, so a level-i tree sees 2^(i-1) pair results.
  const size_t expected = cfg.encoding == Encoding::twos_complement ? (size_t{1} << level)
                                                                     : (size_t{1} << (level - 1));
  if (partials.size() != expected)
    throw Error(ErrorKind::contract, "tree_combine: expected " + std::to_string(expected) + " partials, got " +
                                         std::to_string(partials.size()));
  long total = 0;
  for (size_t p = 0; p < partials.size(); ++p) total += partials[p] * (1L << p);
  return total;
}

}  // namespace cimsim
