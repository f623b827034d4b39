#include "cimsim/characterization.hpp"

#include "cimsim/error.hpp"

#include <cmath>
#include <limits>

namespace cimsim {

std::vector<uint8_t> sweep_pattern(int pre, const MacroGeometry& g) {
  const int n = g.clusters_per_slice;
  if (pre < 0 || pre > max_pre_adc(g)) throw Error(ErrorKind::input_domain, "sweep_pattern: pre out of range");
  std::vector<uint8_t> codes(static_cast<size_t>(n), static_cast<uint8_t>(pre / n));
  for (int i = 0; i < pre % n; ++i) ++codes[static_cast<size_t>(i)];
  return codes;
}

namespace {

struct PointAccumulator {
  double sum = 0.0;
  bool saturated = false;
  void add(const AdcCode& c) {
    sum += c.value();
    saturated = saturated || c.saturated;
  }
};

std::vector<uint8_t> ones(const MacroGeometry& g) { return std::vector<uint8_t>(static_cast<size_t>(g.clusters_per_slice), 1); }
std::vector<uint8_t> zeros(const MacroGeometry& g) { return std::vector<uint8_t>(static_cast<size_t>(g.clusters_per_slice), 0); }

}  // namespace

Sweep sweep_slice(const MacroSimulator& sim, int slice, const SweepOptions& opt, uint64_t seed) {
  const auto& g = sim.geometry();
  std::mt19937_64 rng(derive_seed(seed, static_cast<uint64_t>(slice)));
  const auto bits = ones(g);
  Sweep s{slice, AdcMode::single, {}};
  for (int pre = 0; pre <= max_pre_adc(g); pre += opt.step) {
    const auto codes = sweep_pattern(pre, g);
    const double v = sim.run_slice(slice, codes, bits).v_out;
    PointAccumulator acc;
    for (int r = 0; r < opt.repeats; ++r) acc.add(sim.convert_single(slice, v, &rng));
    s.points.push_back({pre, ideal_quantize(pre, AdcMode::single, sim.analog().adc_lsb_pre).value(),
                        acc.sum / opt.repeats, acc.saturated});
  }
  return s;
}

Sweep sweep_pair(const MacroSimulator& sim, int pair, const SweepOptions& opt, uint64_t seed) {
  const auto& g = sim.geometry();
  std::mt19937_64 rng(derive_seed(seed, 1000 + static_cast<uint64_t>(pair)));
  const auto on = ones(g);
  const auto off = zeros(g);
  const auto idle_codes = zeros(g);
  const int plus = 2 * pair;
  const int minus = 2 * pair + 1;
  Sweep s{pair, AdcMode::differential, {}};
  for (int side = 0; side < 2; ++side) {
    for (int pre = side == 0 ? 0 : opt.step; pre <= max_pre_adc(g); pre += opt.step) {
      const auto codes = sweep_pattern(pre, g);
      const double vp = sim.run_slice(plus, side == 0 ? codes : idle_codes, side == 0 ? on : off).v_out;
      const double vm = sim.run_slice(minus, side == 1 ? codes : idle_codes, side == 1 ? on : off).v_out;
      const int diff = side == 0 ? pre : -pre;
      PointAccumulator acc;
      for (int r = 0; r < opt.repeats; ++r) acc.add(sim.convert_differential(pair, vp, vm, &rng));
      s.points.push_back({diff, ideal_quantize(diff, AdcMode::differential, sim.analog().adc_lsb_pre).value(),
                          acc.sum / opt.repeats, acc.saturated});
    }
  }
  return s;
}

namespace {

LinearFit fit_sweep(const Sweep& s) {
  std::vector<double> x, y;
  for (const auto& p : s.points) {
    if (p.saturated) continue;
    x.push_back(p.ideal_code);
    y.push_back(p.raw_mean);
  }
  return fit_linear(x, y);
}

}  // namespace

Characterization characterize(const MacroSimulator& sim, const SweepOptions& opt, uint64_t seed) {
  const auto& g = sim.geometry();
  Characterization c;
  for (int s = 0; s < g.slices; ++s) {
    c.slice_sweeps.push_back(sweep_slice(sim, s, opt, seed));
    c.table.slices.push_back(fit_sweep(c.slice_sweeps.back()));
  }
  for (int p = 0; p < g.slice_pairs; ++p) {
    c.pair_sweeps.push_back(sweep_pair(sim, p, opt, seed));
    c.table.pairs.push_back(fit_sweep(c.pair_sweeps.back()));
  }

  std::vector<double> ideal, lin;
  for (const auto& s : c.slice_sweeps)
    for (const auto& p : s.points)
      if (!p.saturated) {
        ideal.push_back(p.ideal_code);
        lin.push_back(c.table.apply_single(s.index, p.raw_mean, CalibrationMode::linear));
      }
  c.table.master_single = MasterCurve::fit(ideal, lin, 0, 63);

  ideal.clear();
  lin.clear();
  for (const auto& s : c.pair_sweeps)
    for (const auto& p : s.points)
      if (!p.saturated) {
        ideal.push_back(p.ideal_code);
        lin.push_back(c.table.apply_differential(s.index, p.raw_mean, CalibrationMode::linear));
      }
  c.table.master_differential = MasterCurve::fit(ideal, lin, -64, 63);
  return c;
}

InlReport inl_profile(const std::vector<Sweep>& slice_sweeps, const CalibrationTable& table, CalibrationMode mode) {
  InlReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  size_t points = 0;
  for (const auto& s : slice_sweeps) {
    std::vector<double> inl;
    double worst = 0.0;
    for (const auto& p : s.points) {
      if (p.saturated) {
        inl.push_back(nan);
        continue;
      }
      const double e = table.apply_single(s.index, p.raw_mean, mode) - p.ideal_code;
      inl.push_back(e);
      worst = std::max(worst, std::abs(e));
    }
    points = std::max(points, inl.size());
    r.max_abs = std::max(r.max_abs, worst);
    r.max_abs_per_slice.push_back(worst);
    r.inl.push_back(std::move(inl));
  }

  r.mean.assign(points, nan);
  r.three_sigma.assign(points, nan);
  for (size_t i = 0; i < points; ++i) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (const auto& row : r.inl)
      if (i < row.size() && !std::isnan(row[i])) {
        sum += row[i];
        sq += row[i] * row[i];
        ++n;
      }
    if (n == 0) continue;
    const double m = sum / n;
    r.mean[i] = m;
    r.three_sigma[i] = 3.0 * std::sqrt(std::max(0.0, sq / n - m * m));
  }
  return r;
}

namespace {

struct StatsAccumulator {
  ErrorStats stats;
  double sum = 0.0, sq = 0.0;
  void add(long err) {
    ++stats.samples;
    ++stats.histogram[static_cast<int>(err)];
    sum += err;
    sq += static_cast<double>(err) * err;
  }
  ErrorStats finish() {
    if (stats.samples > 0) {
      stats.mean = sum / stats.samples;
      stats.sigma = std::sqrt(std::max(0.0, sq / stats.samples - stats.mean * stats.mean));
    }
    return stats;
  }
};

}  // namespace

ErrorHistogram error_histogram(const MacroSimulator& sim, const CalibrationTable& table, const ErrorProtocol& proto,
                               uint64_t seed) {
  const auto& g = sim.geometry();
  if (proto.adcs > g.slice_pairs) throw Error(ErrorKind::input_domain, "error_histogram: more ADCs than slice pairs");
  std::mt19937_64 input_rng(derive_seed(seed, 0));
  std::mt19937_64 noise_rng(derive_seed(seed, 1));
  const auto bits = ones(g);
  std::vector<uint8_t> codes(static_cast<size_t>(g.clusters_per_slice));
  StatsAccumulator raw, lin, two;
  std::vector<ErrorSample> samples;

  for (int set = 0; set < proto.sets; ++set) {
    std::normal_distribution<double> draw(set, proto.code_sigma);  // set k (1-based) has mean k - 1
    for (int pattern = 0; pattern < proto.patterns; ++pattern) {
      int pre = 0;
      for (auto& c : codes) {
        c = static_cast<uint8_t>(std::clamp<long>(round_half_up(draw(input_rng)), 0, 15));
        pre += c;
      }
      const int ideal = ideal_quantize(pre, AdcMode::single, sim.analog().adc_lsb_pre).value();
      for (int adc = 0; adc < proto.adcs; ++adc) {
        const int slice = 2 * adc;
        const double v = sim.run_slice(slice, codes, bits).v_out;
        for (int r = 0; r < proto.repeats; ++r) {
          const int y = sim.convert_single(slice, v, &noise_rng).value();
          const long yl = round_half_up(table.apply_single(slice, y, CalibrationMode::linear));
          const long yt = round_half_up(table.apply_single(slice, y, CalibrationMode::two_step));
          raw.add(y - ideal);
          lin.add(yl - ideal);
          two.add(yt - ideal);
          if (proto.keep_samples) samples.push_back({ideal, y, yl, yt, slice});
        }
      }
    }
  }
  return {raw.finish(), lin.finish(), two.finish(), std::move(samples)};
}

std::vector<RmsPoint> rms_profile(const MacroSimulator& sim, int slice, int runs, int step, uint64_t seed) {
  const auto& g = sim.geometry();
  std::mt19937_64 rng(derive_seed(seed, static_cast<uint64_t>(slice)));
  const auto bits = ones(g);
  const auto& adc = sim.profile().adcs.at(static_cast<size_t>(slice / 2));
  std::vector<RmsPoint> out;
  for (int pre = 0; pre <= max_pre_adc(g); pre += step) {
    const double v = sim.run_slice(slice, sweep_pattern(pre, g), bits).v_out;
    const bool sat = sim.convert_single(slice, v, &rng).saturated;
    out.push_back({pre, measure_rms(v, sim.analog().vdd, AdcMode::single, sim.adc_params(), adc, runs, rng), sat});
  }
  return out;
}

double average_rms(const std::vector<RmsPoint>& points) {
  double s = 0.0;
  int n = 0;
  for (const auto& p : points)
    if (!p.saturated) {
      s += p.rms;
      ++n;
    }
  return n == 0 ? 0.0 : s / n;
}

}  // namespace cimsim
