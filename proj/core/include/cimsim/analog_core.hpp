#pragma once

#include "cimsim/macro_config.hpp"
#include "cimsim/variation.hpp"

#include <cstdint>
#include <span>

namespace cimsim {

// Output of one slice after charge sharing. Signal magnitude is vdd - v_out;
// pre_adc_value is the ideal integer sum of bit * code over the slice.
struct SliceVoltage {
  double v_out = 0.0;
  int pre_adc_value = 0;
};

enum class SwitchingError { off, on };

// Current-steering DAC: discharges the input line linearly from vdd.
double dac_convert(int code, const AnalogParams& a);

// 1b x 4b multiply on the sampling capacitor. A stored 0 pulls the capacitor
// back to vdd; a stored 1 leaves the sampled input in place.
inline double multiply_bit(double v_in, bool w, const AnalogParams& a) { return w ? v_in : a.vdd; }

// Switch non-idealities of the PMOS-only cluster.
double coupling_error_mom(const AnalogParams& a);
double coupling_error_out(const AnalogParams& a, const MacroGeometry& g);
double charge_injection_error(double v_mom, const AnalogParams& a);
// Residual error on the output line after charge sharing, for a uniform
// capacitor voltage v_mom.
double net_switching_error(double v_mom, const AnalogParams& a, const MacroGeometry& g);

// Returns `a` with c_gs resized so that net_switching_error(vdd) == 0, the
// all-zero-input null point. Throws if no positive c_gs achieves it.
AnalogParams null_switching_offset(const AnalogParams& a, const MacroGeometry& g);

// Charge sharing of every sampling capacitor with the precharged output line.
SliceVoltage accumulate(std::span<const double> v_moms, const AnalogParams& a, const MacroGeometry& g,
                        SwitchingError err = SwitchingError::off);

// Output-line volts per unit of pre-ADC value, ideal model.
double volts_per_pre_unit(const AnalogParams& a, const MacroGeometry& g);

// One slice MAC: DAC, multiply, accumulate. `variation` (optional) applies
// the slice's gain and switching residue to the signal.
SliceVoltage slice_mac(std::span<const uint8_t> codes, std::span<const uint8_t> bits, const AnalogParams& a,
                       const MacroGeometry& g, const SliceVariation* variation = nullptr,
                       SwitchingError err = SwitchingError::off);

}  // namespace cimsim
