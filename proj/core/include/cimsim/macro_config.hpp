#pragma once

#include <string>
#include <vector>

namespace cimsim {

// Array organisation of one macro. A cluster holds `cells_per_cluster` 6T
// cells sharing one sampling capacitor; only one of them is selected per cycle.
struct MacroGeometry {
  int rows = 512;
  int cols = 128;
  int cells_per_cluster = 8;
  int slices = 64;
  int slice_pairs = 32;
  int clusters_per_slice = 128;
};

// Electrical parameters. Voltages in volts, capacitances in femtofarads.
struct AnalogParams {
  double vdd = 1.2;
  double c_mom = 1.2;
  double c_p = 80.0;
  double c_gs = 0.2;
  double ci_channel_cap = 0.4;  // C_OX * W * L of the PMOS switches
  double v_th = 0.4;
  double dac_step = 0.04;       // volts per input code
  double adc_lsb_pre = 30.0;    // pre-ADC integer units per single-ended LSB
};

struct Violation {
  std::string field;
  std::string message;
};

MacroGeometry default_geometry();

// Returns every violated invariant; empty means valid.
std::vector<Violation> validate(const MacroGeometry& g, const AnalogParams& a);

// Largest ideal pre-ADC value of one slice (all weights 1, all codes 15).
inline int max_pre_adc(const MacroGeometry& g) { return g.clusters_per_slice * 15; }

}  // namespace cimsim
