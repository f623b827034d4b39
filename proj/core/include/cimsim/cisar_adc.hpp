#pragma once

#include "cimsim/macro_config.hpp"
#include "cimsim/variation.hpp"

#include <array>
#include <random>
#include <vector>

namespace cimsim {

enum class AdcMode { single, differential };

inline constexpr int kAdcBits = 7;
inline constexpr int kAdcMidCode = 64;
inline constexpr int kAdcMaxCode = 127;
// Units deducted at each SAR step; the last decision is a comparison only.
inline constexpr std::array<int, kAdcBits> kFiringSchedule{32, 16, 8, 4, 2, 1, 0};

struct AdcParams {
  int bits = kAdcBits;
  int ci_cells = kCiCells;
  double unit_step = 0.0;  // volts on the output line per CI-cell firing (= 1 LSB)
  double fullscale = 0.0;  // single-ended signal span, 64 LSB

  // Derives the conversion step from the analog chain so that one LSB spans
  // adc_lsb_pre pre-ADC units.
  static AdcParams from(const AnalogParams& a, const MacroGeometry& g);
};

// Offset-binary code: 64 is zero differential. In single mode raw >= 64 and
// the six-bit value is raw - 64.
struct AdcCode {
  int raw = kAdcMidCode;
  AdcMode mode = AdcMode::differential;
  bool saturated = false;

  int value() const { return raw - kAdcMidCode; }
};

// Closed-form reference quantizer: round half up, clamp to the code range.
AdcCode ideal_quantize(long pre_adc_diff, AdcMode mode, double adc_lsb_pre = 30.0);

// Per-step record of which CI cells fired.
struct FiringLog {
  std::vector<std::vector<int>> cells_per_step;
  std::vector<bool> bits;
};

// Behavioral monotonic-switching SAR conversion. In single mode the disabled
// side must sit at vdd and the active slice drives v_plus. `rng` may be null
// only when the non-ideality carries no noise.
AdcCode convert(double v_plus, double v_minus, AdcMode mode, const AdcParams& p, const AdcNonideality& adc,
                std::mt19937_64* rng, FiringLog* log = nullptr);

// Standard deviation of the output code over repeated conversions, in LSB.
double measure_rms(double v_plus, double v_minus, AdcMode mode, const AdcParams& p, const AdcNonideality& adc,
                   int runs, std::mt19937_64& rng);

}  // namespace cimsim
