#pragma once

#include "cimsim/cisar_adc.hpp"

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cimsim {

// Least-squares line y = k x + b through (ideal, measured) code pairs, with
// the usual standard errors of the coefficients.
struct LinearFit {
  double k = 1.0;
  double b = 0.0;
  double sigma_k = 0.0;
  double sigma_b = 0.0;
  double residual_rms = 0.0;
  size_t samples = 0;

  double calibrate(double measured) const { return (measured - b) / k; }
};

LinearFit fit_linear(std::span<const double> ideal, std::span<const double> measured);

// Correction for systematic nonlinearity shared by all slices of a chip:
// median residual per bucket of the ideal-code domain, linearly interpolated.
class MasterCurve {
 public:
  MasterCurve() = default;

  static MasterCurve identity(double lo, double hi);

  // `calibrated` are codes after per-slice linear calibration; residuals are
  // taken against `ideal`. Falls back to identity if the fitted curve would
  // raise the mean |error| on its own fitting data.
  static MasterCurve fit(std::span<const double> ideal, std::span<const double> calibrated, double lo, double hi,
                         int buckets = 64);

  double apply(double code) const;
  bool is_identity() const { return knots_.empty(); }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }

  static MasterCurve from_knots(double lo, double hi, std::vector<std::pair<double, double>> knots);

 private:
  double residual_at(double code) const;

  double lo_ = 0.0;
  double hi_ = 0.0;
  std::vector<std::pair<double, double>> knots_;  // (code, residual), ascending code
};

enum class CalibrationMode { none, linear, two_step };

CalibrationMode calibration_mode_from_string(std::string_view s);
std::string_view to_string(CalibrationMode m);

// Offline calibration of one simulated chip: per-slice single-ended fits,
// per-ADC differential fits, and one master curve per ADC mode.
struct CalibrationTable {
  static constexpr int kVersion = 1;

  std::vector<LinearFit> slices;
  std::vector<LinearFit> pairs;
  MasterCurve master_single = MasterCurve::identity(0, 63);
  MasterCurve master_differential = MasterCurve::identity(-64, 63);

  // Inputs and results are zero-referenced codes (raw - 64), in LSB.
  double apply_single(int slice, double value, CalibrationMode mode) const;
  double apply_differential(int pair, double value, CalibrationMode mode) const;
  // Readout of one conversion. A code pinned at a rail says only that the
  // input is at or past it, so it maps to the ideal rail; other codes are
  // calibrated and clamped to the ideal code range.
  double correct_single(int slice, const AdcCode& code, CalibrationMode mode) const;
  double correct_differential(int pair, const AdcCode& code, CalibrationMode mode) const;

  std::string to_json() const;
  static CalibrationTable from_json(std::string_view text);
};

}  // namespace cimsim
