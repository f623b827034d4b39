#pragma once

#include "cimsim/calibration.hpp"
#include "cimsim/macro_sim.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace cimsim {

// Input codes (all weights 1) whose ideal pre-ADC sum is `pre`, spread as
// evenly as possible over the lanes.
std::vector<uint8_t> sweep_pattern(int pre, const MacroGeometry& g);

struct SweepPoint {
  int pre = 0;          // signed for differential sweeps
  int ideal_code = 0;   // zero-referenced ideal quantizer output
  double raw_mean = 0;  // zero-referenced measured code, averaged over repeats
  bool saturated = false;
};

struct Sweep {
  int index = 0;  // slice for single-ended, pair for differential
  AdcMode mode = AdcMode::single;
  std::vector<SweepPoint> points;
};

struct SweepOptions {
  int repeats = 8;  // conversions averaged per point (noise filtering)
  int step = 1;     // pre-ADC stride of the sweep
};

Sweep sweep_slice(const MacroSimulator& sim, int slice, const SweepOptions& opt, uint64_t seed);
// Plus side swept with the minus slice idle, then the reverse.
Sweep sweep_pair(const MacroSimulator& sim, int pair, const SweepOptions& opt, uint64_t seed);

struct Characterization {
  std::vector<Sweep> slice_sweeps;
  std::vector<Sweep> pair_sweeps;
  CalibrationTable table;
};

// Sweeps every slice and pair, fits the linear calibrations and the master
// curves. Saturated points are excluded from every fit.
Characterization characterize(const MacroSimulator& sim, const SweepOptions& opt, uint64_t seed);

struct InlReport {
  std::vector<std::vector<double>> inl;  // per slice, per sweep point; NaN where saturated
  std::vector<double> max_abs_per_slice;
  std::vector<double> mean;              // per sweep point across slices
  std::vector<double> three_sigma;       // per sweep point across slices
  double max_abs = 0.0;
};

InlReport inl_profile(const std::vector<Sweep>& slice_sweeps, const CalibrationTable& table, CalibrationMode mode);

struct ErrorProtocol {
  int sets = 16;
  int patterns = 64;
  int adcs = 32;
  int repeats = 16;
  double code_sigma = 2.0;  // std of the per-element input code distribution
  bool keep_samples = false;
};

struct ErrorSample {
  int ideal = 0;
  int raw = 0;  // zero-referenced
  long linear = 0;
  long two_step = 0;
  int slice = 0;
};

struct ErrorStats {
  long samples = 0;
  double mean = 0.0;
  double sigma = 0.0;
  std::map<int, long> histogram;  // error in LSB -> count
};

struct ErrorHistogram {
  ErrorStats raw;
  ErrorStats linear;
  ErrorStats two_step;
  std::vector<ErrorSample> samples;  // only with keep_samples
};

// Paired Monte Carlo: every conversion is scored uncalibrated, with linear
// calibration and with two-step calibration.
ErrorHistogram error_histogram(const MacroSimulator& sim, const CalibrationTable& table, const ErrorProtocol& proto,
                               uint64_t seed);

struct RmsPoint {
  int pre = 0;
  double rms = 0.0;
  bool saturated = false;
};

std::vector<RmsPoint> rms_profile(const MacroSimulator& sim, int slice, int runs, int step, uint64_t seed);
// Mean rms over the non-saturated points.
double average_rms(const std::vector<RmsPoint>& points);

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

}  // namespace cimsim
