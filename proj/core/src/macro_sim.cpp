#include "cimsim/macro_sim.hpp"

#include "cimsim/error.hpp"

#include <cmath>

namespace cimsim {

MacroSimulator::MacroSimulator(const MacroGeometry& g, const AnalogParams& a, VariationProfile profile,
                               SwitchingError switching)
    : geometry_(g),
      analog_(a),
      adc_(AdcParams::from(a, g)),
      profile_(std::move(profile)),
      switching_(switching),
      volts_per_unit_(volts_per_pre_unit(a, g)),
      ideal_(profile_.is_ideal() && switching == SwitchingError::off) {
  if (static_cast<int>(profile_.slices.size()) != g.slices ||
      static_cast<int>(profile_.adcs.size()) != g.slice_pairs)
    throw Error(ErrorKind::contract, "variation profile does not match the macro geometry");
}

SliceVoltage MacroSimulator::run_slice(int slice, std::span<const uint8_t> codes,
                                       std::span<const uint8_t> bits) const {
  const SliceVariation* v = ideal_ ? nullptr : &profile_.slices.at(static_cast<size_t>(slice));
  return slice_mac(codes, bits, analog_, geometry_, v, switching_);
}

AdcCode MacroSimulator::convert_single(int slice, double v_out, std::mt19937_64* rng) const {
  return convert(v_out, analog_.vdd, AdcMode::single, adc_, profile_.adcs.at(static_cast<size_t>(slice / 2)), rng);
}

AdcCode MacroSimulator::convert_differential(int pair, double v_plus, double v_minus, std::mt19937_64* rng) const {
  return convert(v_plus, v_minus, AdcMode::differential, adc_, profile_.adcs.at(static_cast<size_t>(pair)), rng);
}

long MacroSimulator::pass_through(double v_out) const {
  return std::lround((analog_.vdd - v_out) / volts_per_unit_);
}

}  // namespace cimsim
