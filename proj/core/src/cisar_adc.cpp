#include "cimsim/cisar_adc.hpp"

#include "cimsim/analog_core.hpp"
#include "cimsim/error.hpp"

#include <algorithm>
#include <cmath>

namespace cimsim {

namespace {

// Comparisons closer than this to the threshold are ties (bit = 1). Only
// float round-off lives at this scale.
constexpr double kTieLsb = 1e-9;

long floor_div_half_up(long num, double den) { return static_cast<long>(std::floor(num / den + 0.5)); }

}  // namespace

AdcParams AdcParams::from(const AnalogParams& a, const MacroGeometry& g) {
  AdcParams p;
  p.unit_step = a.adc_lsb_pre * volts_per_pre_unit(a, g);
  p.fullscale = 64.0 * p.unit_step;
  return p;
}

AdcCode ideal_quantize(long pre_adc_diff, AdcMode mode, double adc_lsb_pre) {
  const long unclamped = kAdcMidCode + floor_div_half_up(pre_adc_diff, adc_lsb_pre);
  const long lo = mode == AdcMode::single ? kAdcMidCode : 0;
  AdcCode c;
  c.mode = mode;
  c.raw = static_cast<int>(std::clamp<long>(unclamped, lo, kAdcMaxCode));
  c.saturated = unclamped != c.raw;
  return c;
}

AdcCode convert(double v_plus, double v_minus, AdcMode mode, const AdcParams& p, const AdcNonideality& adc,
                std::mt19937_64* rng, FiringLog* log) {
  if (adc.noise_lsb > 0.0 && rng == nullptr)
    throw Error(ErrorKind::contract, "convert: noisy comparator needs an rng");
  std::normal_distribution<double> noise(0.0, adc.noise_lsb);

  // Comparator reference sits half an LSB below mid so that decisions land on
  // half-integer thresholds (round half up).
  const double bias = 0.5 + adc.comparator_offset_lsb;
  const double position = (v_minus - v_plus) / p.unit_step + bias;  // noise-free, in LSB
  int code = 0;
  for (int step = 0; step < kAdcBits; ++step) {
    double s = (v_minus - v_plus) / p.unit_step + bias;
    if (adc.noise_lsb > 0.0) s += noise(*rng);
    const bool bit = s >= -kTieLsb;
    code = (code << 1) | (bit ? 1 : 0);

    const int units = kFiringSchedule[step];
    std::vector<int> fired;
    double deducted = 0.0;
    if (units > 0) {
      // Unary cells: a step of u < 16 units fires cells [0, u); the MSB step
      // fires every cell twice.
      const int passes = units > kCiCells ? units / kCiCells : 1;
      const int cells = std::min(units, kCiCells);
      for (int pass = 0; pass < passes; ++pass) {
        for (int c = 0; c < cells; ++c) {
          deducted += adc.ci_cell_gain[c] * p.unit_step;
          if (log != nullptr) fired.push_back(c);
        }
      }
    }
    // Charge only ever leaves the higher side.
    if (bit)
      v_minus -= deducted;
    else
      v_plus -= deducted;
    if (log != nullptr) {
      log->cells_per_step.push_back(std::move(fired));
      log->bits.push_back(bit);
    }
  }

  AdcCode c;
  c.mode = mode;
  c.raw = code;
  if (mode == AdcMode::single && c.raw < kAdcMidCode) {
    c.raw = kAdcMidCode;
    c.saturated = true;
  }
  // A rail code only counts as saturation when the input itself lies beyond
  // the last code's window.
  if (position >= kAdcMaxCode + 1 - kAdcMidCode || position < -kAdcMidCode) c.saturated = true;
  return c;
}

double measure_rms(double v_plus, double v_minus, AdcMode mode, const AdcParams& p, const AdcNonideality& adc,
                   int runs, std::mt19937_64& rng) {
  if (runs < 2) throw Error(ErrorKind::input_domain, "measure_rms needs at least two runs");
  std::vector<double> codes(static_cast<size_t>(runs));
  double mean = 0.0;
  for (auto& c : codes) {
    c = convert(v_plus, v_minus, mode, p, adc, &rng).raw;
    mean += c;
  }
  mean /= runs;
  double ss = 0.0;
  for (double c : codes) ss += (c - mean) * (c - mean);
  return std::sqrt(ss / runs);
}

}  // namespace cimsim
