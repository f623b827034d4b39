#include "cimsim/calibration.hpp"

#include "cimsim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace cimsim {

using nlohmann::json;

LinearFit fit_linear(std::span<const double> ideal, std::span<const double> measured) {
  if (ideal.size() != measured.size())
    throw Error(ErrorKind::contract, "fit_linear: ideal and measured lengths differ");
  const size_t n = ideal.size();
  if (n < 2) throw Error(ErrorKind::fit, "fit_linear: need at least two points");

  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += ideal[i];
    my += measured[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (ideal[i] - mx) * (ideal[i] - mx);
    sxy += (ideal[i] - mx) * (measured[i] - my);
  }
  if (sxx <= 0.0) throw Error(ErrorKind::fit, "fit_linear: degenerate data, all ideal codes equal");

  LinearFit f;
  f.k = sxy / sxx;
  f.b = my - f.k * mx;
  if (std::abs(f.k) < 1e-12) throw Error(ErrorKind::fit, "fit_linear: zero gain");
  double sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = measured[i] - (f.k * ideal[i] + f.b);
    sse += r * r;
  }
  f.samples = n;
  f.residual_rms = std::sqrt(sse / n);
  if (n > 2) {
    const double s2 = sse / (n - 2);
    f.sigma_k = std::sqrt(s2 / sxx);
    f.sigma_b = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
  }
  return f;
}

MasterCurve MasterCurve::identity(double lo, double hi) {
  MasterCurve m;
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

MasterCurve MasterCurve::from_knots(double lo, double hi, std::vector<std::pair<double, double>> knots) {
  MasterCurve m = identity(lo, hi);
  std::sort(knots.begin(), knots.end());
  m.knots_ = std::move(knots);
  return m;
}

double MasterCurve::residual_at(double code) const {
  if (knots_.empty()) return 0.0;
  if (code <= knots_.front().first) return knots_.front().second;
  if (code >= knots_.back().first) return knots_.back().second;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), code,
                             [](double c, const auto& k) { return c < k.first; });
  auto lo = hi - 1;
  const double t = (code - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

double MasterCurve::apply(double code) const { return code - residual_at(code); }

namespace {

double median(std::vector<double> v) {
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + mid)) / 2.0;
  }
  return m;
}

double mean_abs_error(std::span<const double> ideal, std::span<const double> codes, const MasterCurve& m) {
  double s = 0.0;
  for (size_t i = 0; i < ideal.size(); ++i) s += std::abs(m.apply(codes[i]) - ideal[i]);
  return ideal.empty() ? 0.0 : s / ideal.size();
}

}  // namespace

MasterCurve MasterCurve::fit(std::span<const double> ideal, std::span<const double> calibrated, double lo, double hi,
                             int buckets) {
  if (ideal.size() != calibrated.size())
    throw Error(ErrorKind::contract, "master curve: ideal and calibrated lengths differ");
  if (buckets < 1 || !(hi > lo)) throw Error(ErrorKind::input_domain, "master curve: bad bucket domain");

  std::vector<std::vector<double>> bins(static_cast<size_t>(buckets));
  const double width = (hi - lo) / buckets;
  for (size_t i = 0; i < ideal.size(); ++i) {
    const int b = std::clamp(static_cast<int>(std::floor((ideal[i] - lo) / width)), 0, buckets - 1);
    bins[b].push_back(calibrated[i] - ideal[i]);
  }

  std::vector<std::pair<double, double>> knots;
  for (int b = 0; b < buckets; ++b)
    if (!bins[b].empty()) knots.emplace_back(lo + (b + 0.5) * width, median(bins[b]));
  if (knots.empty()) return identity(lo, hi);

  // 3-tap smoothing of the bucket medians.
  std::vector<std::pair<double, double>> smooth = knots;
  for (size_t i = 1; i + 1 < knots.size(); ++i)
    smooth[i].second = (knots[i - 1].second + knots[i].second + knots[i + 1].second) / 3.0;

  // The corrected transfer x - r(x) must not decrease between knots.
  double prev = -INFINITY;
  for (auto& [x, r] : smooth) {
    double y = std::max(x - r, prev);
    r = x - y;
    prev = y;
  }

  MasterCurve m = from_knots(lo, hi, std::move(smooth));
  if (mean_abs_error(ideal, calibrated, m) > mean_abs_error(ideal, calibrated, identity(lo, hi)))
    return identity(lo, hi);
  return m;
}

CalibrationMode calibration_mode_from_string(std::string_view s) {
  if (s == "none") return CalibrationMode::none;
  if (s == "linear") return CalibrationMode::linear;
  if (s == "two-step" || s == "two_step") return CalibrationMode::two_step;
  throw Error(ErrorKind::input_domain, "unknown calibration mode: " + std::string(s));
}

std::string_view to_string(CalibrationMode m) {
  switch (m) {
    case CalibrationMode::none: return "none";
    case CalibrationMode::linear: return "linear";
    case CalibrationMode::two_step: return "two-step";
  }
  return "none";
}

double CalibrationTable::apply_single(int slice, double value, CalibrationMode mode) const {
  if (mode == CalibrationMode::none) return value;
  const double lin = slices.at(static_cast<size_t>(slice)).calibrate(value);
  return mode == CalibrationMode::two_step ? master_single.apply(lin) : lin;
}

double CalibrationTable::apply_differential(int pair, double value, CalibrationMode mode) const {
  if (mode == CalibrationMode::none) return value;
  const double lin = pairs.at(static_cast<size_t>(pair)).calibrate(value);
  return mode == CalibrationMode::two_step ? master_differential.apply(lin) : lin;
}

double CalibrationTable::correct_single(int slice, const AdcCode& code, CalibrationMode mode) const {
  if (mode == CalibrationMode::none) return code.value();
  if (code.saturated && code.value() <= 0) return 0.0;
  return std::clamp(apply_single(slice, code.value(), mode), 0.0, 63.0);
}

double CalibrationTable::correct_differential(int pair, const AdcCode& code, CalibrationMode mode) const {
  if (mode == CalibrationMode::none) return code.value();
  if (code.saturated && code.raw == 0) return -64.0;
  if (code.saturated && code.raw == kAdcMaxCode) return 63.0;
  return std::clamp(apply_differential(pair, code.value(), mode), -64.0, 63.0);
}

namespace {

json fits_to_json(const std::vector<LinearFit>& fits) {
  json arr = json::array();
  for (size_t i = 0; i < fits.size(); ++i)
    arr.push_back({{"id", i}, {"k", fits[i].k}, {"b", fits[i].b}, {"sigma_k", fits[i].sigma_k},
                   {"sigma_b", fits[i].sigma_b}, {"residual_rms", fits[i].residual_rms},
                   {"samples", fits[i].samples}});
  return arr;
}

std::vector<LinearFit> fits_from_json(const json& arr) {
  std::vector<LinearFit> out(arr.size());
  for (const auto& e : arr) {
    const auto id = e.at("id").get<size_t>();
    if (id >= out.size()) throw Error(ErrorKind::data, "calibration: fit id out of range");
    LinearFit& f = out[id];
    f.k = e.at("k").get<double>();
    f.b = e.at("b").get<double>();
    f.sigma_k = e.value("sigma_k", 0.0);
    f.sigma_b = e.value("sigma_b", 0.0);
    f.residual_rms = e.value("residual_rms", 0.0);
    f.samples = e.value("samples", size_t{0});
    if (f.k == 0.0) throw Error(ErrorKind::data, "calibration: zero gain in table");
  }
  return out;
}

json curve_to_json(const MasterCurve& m) {
  json knots = json::array();
  for (const auto& [x, r] : m.knots()) knots.push_back({x, r});
  return {{"lo", m.lo()}, {"hi", m.hi()}, {"knots", knots}};
}

MasterCurve curve_from_json(const json& j) {
  std::vector<std::pair<double, double>> knots;
  for (const auto& k : j.at("knots")) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
  return MasterCurve::from_knots(j.at("lo").get<double>(), j.at("hi").get<double>(), std::move(knots));
}

}  // namespace

std::string CalibrationTable::to_json() const {
  json j = {{"format", "cimsim-calibration"},
            {"version", kVersion},
            {"slices", fits_to_json(slices)},
            {"pairs", fits_to_json(pairs)},
            {"master_curve", {{"single", curve_to_json(master_single)},
                              {"differential", curve_to_json(master_differential)}}}};
  return j.dump(2);
}

CalibrationTable CalibrationTable::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("calibration: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "cimsim-calibration")
    throw Error(ErrorKind::data, "calibration: not a calibration document");
  if (j.value("version", 0) != kVersion)
    throw Error(ErrorKind::data, "calibration: version mismatch");
  try {
    CalibrationTable t;
    t.slices = fits_from_json(j.at("slices"));
    t.pairs = fits_from_json(j.at("pairs"));
    t.master_single = curve_from_json(j.at("master_curve").at("single"));
    t.master_differential = curve_from_json(j.at("master_curve").at("differential"));
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("calibration: ") + e.what());
  }
}

}  // namespace cimsim
