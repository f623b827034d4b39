#pragma once

#include "cimsim/analog_core.hpp"
#include "cimsim/cisar_adc.hpp"
#include "cimsim/variation.hpp"

#include <random>
#include <span>

namespace cimsim {

// One macro instance: analog slices feeding the per-pair ADCs. Immutable
// after construction; conversions take a caller-owned RNG.
class MacroSimulator {
 public:
  MacroSimulator(const MacroGeometry& g, const AnalogParams& a, VariationProfile profile,
                 SwitchingError switching = SwitchingError::off);

  const MacroGeometry& geometry() const { return geometry_; }
  const AnalogParams& analog() const { return analog_; }
  const AdcParams& adc_params() const { return adc_; }
  const VariationProfile& profile() const { return profile_; }
  bool ideal() const { return ideal_; }

  SliceVoltage run_slice(int slice, std::span<const uint8_t> codes, std::span<const uint8_t> bits) const;

  // Single-ended conversion: the active slice drives the plus input, the
  // disabled side rests at vdd.
  AdcCode convert_single(int slice, double v_out, std::mt19937_64* rng) const;
  AdcCode convert_differential(int pair, double v_plus, double v_minus, std::mt19937_64* rng) const;

  // Quantizer bypass: recovers the exact pre-ADC integer from a line voltage.
  long pass_through(double v_out) const;

 private:
  MacroGeometry geometry_;
  AnalogParams analog_;
  AdcParams adc_;
  VariationProfile profile_;
  SwitchingError switching_;
  double volts_per_unit_;
  bool ideal_;
};

}  // namespace cimsim
