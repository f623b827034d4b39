#include "cimsim/macro_config.hpp"

#include "cimsim/error.hpp"

#include <cmath>

namespace cimsim {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input_domain: return "input-domain";
    case ErrorKind::contract: return "contract";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::fit: return "fit";
    case ErrorKind::data: return "data";
    case ErrorKind::invariant: return "invariant";
  }
  return "unknown";
}

MacroGeometry default_geometry() { return MacroGeometry{}; }

std::vector<Violation> validate(const MacroGeometry& g, const AnalogParams& a) {
  std::vector<Violation> out;
  auto fail = [&](const char* field, const char* msg) { out.push_back({field, msg}); };

  if (g.rows < 1) fail("rows", "rows must be >= 1");
  if (g.cols < 1) fail("cols", "cols must be >= 1");
  if (g.cells_per_cluster < 1) fail("cells_per_cluster", "cells_per_cluster must be >= 1");
  if (g.slices < 1) fail("slices", "slices must be >= 1");
  if (g.slice_pairs < 1) fail("slice_pairs", "slice_pairs must be >= 1");
  if (g.clusters_per_slice < 1) fail("clusters_per_slice", "clusters_per_slice must be >= 1");

  if (g.rows != g.cells_per_cluster * g.slices)
    fail("rows", "rows != cells_per_cluster*slices");
  if (g.slices != 2 * g.slice_pairs)
    fail("slice_pairs", "slices != 2*slice_pairs");
  if (g.clusters_per_slice != g.cols)
    fail("clusters_per_slice", "clusters_per_slice != cols");

  if (!(a.c_mom > 0)) fail("c_mom", "c_mom must be > 0");
  if (!(a.c_p > 0)) fail("c_p", "c_p must be > 0");
  if (!(a.c_gs > 0)) fail("c_gs", "c_gs must be > 0");
  if (!(a.ci_channel_cap > 0)) fail("ci_channel_cap", "ci_channel_cap must be > 0");
  if (!(a.vdd > 0)) fail("vdd", "vdd must be > 0");
  if (!(a.dac_step > 0)) fail("dac_step", "dac_step must be > 0");

  // Small slack so that 1.2 - 15*0.04 (= 0.6 in exact arithmetic) passes.
  if (a.vdd - 15.0 * a.dac_step < 0.6 - 1e-12)
    fail("dac_step", "DAC floor below 600 mV");

  const double expected_lsb = g.clusters_per_slice * 15.0 / 64.0;
  if (std::abs(a.adc_lsb_pre - expected_lsb) > 1e-9)
    fail("adc_lsb_pre", "adc_lsb_pre != clusters_per_slice*15/64");
  return out;
}

}  // namespace cimsim
