#include "cimsim/analog_core.hpp"

#include "cimsim/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cimsim {

double dac_convert(int code, const AnalogParams& a) {
  if (code < 0 || code > 15)
    throw Error(ErrorKind::input_domain, "DAC code out of range: " + std::to_string(code));
  return a.vdd - code * a.dac_step;
}

double coupling_error_mom(const AnalogParams& a) { return a.c_gs / (a.c_gs + a.c_mom) * a.vdd; }

double coupling_error_out(const AnalogParams& a, const MacroGeometry& g) {
  return a.c_gs / (a.c_gs + a.c_p / g.clusters_per_slice) * a.vdd;
}

// Signed: negative above vdd - v_th, which is where the all-"0000" point sits.
double charge_injection_error(double v_mom, const AnalogParams& a) {
  return a.ci_channel_cap * (a.vdd - a.v_th - v_mom) / (2.0 * a.c_mom);
}

double net_switching_error(double v_mom, const AnalogParams& a, const MacroGeometry& g) {
  const double n_cmom = g.clusters_per_slice * a.c_mom;
  // the two terms have opposite polarity at the all-zero point, so they add here
  return (a.c_p * coupling_error_out(a, g) + n_cmom * charge_injection_error(v_mom, a)) / (n_cmom + a.c_p);
}

AnalogParams null_switching_offset(const AnalogParams& a, const MacroGeometry& g) {
  // Solve c_p * dV_cc,p(c_gs) = -n * c_mom * dV_ci(vdd) for c_gs.
  const double n_cmom = g.clusters_per_slice * a.c_mom;
  const double target = -n_cmom * charge_injection_error(a.vdd, a) / a.c_p;
  if (!(target > 0.0) || target >= a.vdd)
    throw Error(ErrorKind::unsupported, "switching offset cannot be nulled with a positive C_GS");
  AnalogParams out = a;
  out.c_gs = target * (a.c_p / g.clusters_per_slice) / (a.vdd - target);
  return out;
}

double volts_per_pre_unit(const AnalogParams& a, const MacroGeometry& g) {
  return a.dac_step * a.c_mom / (g.clusters_per_slice * a.c_mom + a.c_p);
}

namespace {

double share(double sum_v, double sum_ci, const AnalogParams& a, const MacroGeometry& g, SwitchingError err) {
  const double total = g.clusters_per_slice * a.c_mom + a.c_p;
  double v = (a.c_mom * sum_v + a.c_p * a.vdd) / total;
  if (err == SwitchingError::on) v += (a.c_p * coupling_error_out(a, g) + a.c_mom * sum_ci) / total;
  return std::clamp(v, 0.0, a.vdd);
}

}  // namespace

SliceVoltage accumulate(std::span<const double> v_moms, const AnalogParams& a, const MacroGeometry& g,
                        SwitchingError err) {
  if (static_cast<int>(v_moms.size()) != g.clusters_per_slice)
    throw Error(ErrorKind::input_domain, "accumulate: expected " + std::to_string(g.clusters_per_slice) +
                                             " capacitor voltages, got " + std::to_string(v_moms.size()));
  double sum_v = 0.0;
  double sum_ci = 0.0;
  for (double v : v_moms) {
    sum_v += v;
    if (err == SwitchingError::on) sum_ci += charge_injection_error(v, a);
  }
  SliceVoltage out;
  out.v_out = share(sum_v, sum_ci, a, g, err);
  out.pre_adc_value = static_cast<int>(std::lround((a.vdd - out.v_out) / volts_per_pre_unit(a, g)));
  return out;
}

SliceVoltage slice_mac(std::span<const uint8_t> codes, std::span<const uint8_t> bits, const AnalogParams& a,
                       const MacroGeometry& g, const SliceVariation* variation, SwitchingError err) {
  const auto n = static_cast<size_t>(g.clusters_per_slice);
  if (codes.size() != n || bits.size() != n)
    throw Error(ErrorKind::input_domain, "slice_mac: input and bit vectors must have clusters_per_slice lanes");

  double sum_v = 0.0;
  double sum_ci = 0.0;
  int pre = 0;
  for (size_t i = 0; i < n; ++i) {
    if (bits[i] > 1) throw Error(ErrorKind::input_domain, "slice_mac: weight bit must be 0 or 1");
    const double v = multiply_bit(dac_convert(codes[i], a), bits[i] != 0, a);
    sum_v += v;
    if (err == SwitchingError::on) sum_ci += charge_injection_error(v, a);
    pre += bits[i] * codes[i];
  }

  SliceVoltage out;
  out.pre_adc_value = pre;
  out.v_out = share(sum_v, sum_ci, a, g, err);
  if (variation != nullptr) {
    const double signal = a.vdd - out.v_out;
    out.v_out = std::clamp(a.vdd - variation->gain * signal - variation->switching_dv, 0.0, a.vdd);
  }
  return out;
}

}  // namespace cimsim
