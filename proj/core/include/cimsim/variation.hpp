#pragma once

#include "cimsim/macro_config.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace cimsim {

// Sigmas for the sampled non-idealities. Defaults are stand-ins chosen to
// resemble measured spreads; none of them is a silicon-extracted value.
struct VariationSpec {
  double gain_sigma = 0.03;              // fractional, per slice
  double offset_sigma = 2.0;             // LSB, comparator offset per ADC
  double ci_mismatch_sigma = 0.01;       // fractional, per CI cell
  double comparator_noise_sigma = 0.25;  // LSB, drawn on every comparison
  double switching_error_sigma = 0.6e-3; // volts, residual switch offset per slice
};

inline constexpr int kCiCells = 16;

// Fixed per-ADC imperfections plus the per-comparison noise level.
struct AdcNonideality {
  double comparator_offset_lsb = 0.0;
  std::array<double, kCiCells> ci_cell_gain{1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  double noise_lsb = 0.0;
};

struct SliceVariation {
  double gain = 1.0;
  double switching_dv = 0.0;  // volts, added on the output line
};

// One simulated chip. Reproducible from (VariationSpec, seed).
struct VariationProfile {
  std::vector<SliceVariation> slices;
  std::vector<AdcNonideality> adcs;

  static VariationProfile ideal(const MacroGeometry& g);

  bool is_ideal() const;
  // Effective offset in LSB seen by a slice: its ADC's comparator offset plus
  // the slice's switching residue.
  double slice_offset_lsb(int slice, double unit_step) const;
};

VariationProfile sample_profile(const VariationSpec& spec, const MacroGeometry& g, uint64_t seed);

// SplitMix64 mix of (seed, stream); used to derive independent RNG streams.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

}  // namespace cimsim
