#include "cimsim/variation.hpp"

#include <random>

namespace cimsim {

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

VariationProfile VariationProfile::ideal(const MacroGeometry& g) {
  VariationProfile p;
  p.slices.assign(g.slices, SliceVariation{});
  p.adcs.assign(g.slice_pairs, AdcNonideality{});
  return p;
}

bool VariationProfile::is_ideal() const {
  for (const auto& s : slices)
    if (s.gain != 1.0 || s.switching_dv != 0.0) return false;
  for (const auto& a : adcs) {
    if (a.comparator_offset_lsb != 0.0 || a.noise_lsb != 0.0) return false;
    for (double c : a.ci_cell_gain)
      if (c != 1.0) return false;
  }
  return true;
}

double VariationProfile::slice_offset_lsb(int slice, double unit_step) const {
  return adcs[slice / 2].comparator_offset_lsb + slices[slice].switching_dv / unit_step;
}

VariationProfile sample_profile(const VariationSpec& spec, const MacroGeometry& g, uint64_t seed) {
  VariationProfile p = VariationProfile::ideal(g);
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::normal_distribution<double> unit(0.0, 1.0);

  // Draw order is part of the reproducibility contract: slices, then ADCs.
  for (auto& s : p.slices) {
    s.gain = 1.0 + spec.gain_sigma * unit(rng);
    s.switching_dv = spec.switching_error_sigma * unit(rng);
  }
  for (auto& a : p.adcs) {
    a.comparator_offset_lsb = spec.offset_sigma * unit(rng);
    for (double& c : a.ci_cell_gain) c = 1.0 + spec.ci_mismatch_sigma * unit(rng);
    a.noise_lsb = spec.comparator_noise_sigma;
  }
  return p;
}

}  // namespace cimsim
