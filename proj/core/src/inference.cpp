#include "cimsim/inference.hpp"

#include "cimsim/characterization.hpp"
#include "cimsim/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace cimsim {

using nlohmann::json;

std::vector<MacJob> lower_convolution(const LayerSpec& l, std::span<const uint8_t> act, const MacroGeometry& g) {
  const int n = g.clusters_per_slice;
  const int fan_in = l.fan_in();
  const int chunks = (fan_in + n - 1) / n;
  std::vector<MacJob> jobs;
  if (l.kind == LayerKind::fc) {
    if (act.size() != static_cast<size_t>(l.in_channels))
      throw Error(ErrorKind::contract, l.name + ": expected " + std::to_string(l.in_channels) + " inputs, got " +
                                           std::to_string(act.size()));
    for (int c = 0; c < chunks; ++c) {
      MacJob j{0, c, std::min(n, fan_in - c * n), std::vector<uint8_t>(static_cast<size_t>(n), 0)};
      std::copy_n(act.begin() + static_cast<long>(c) * n, j.active, j.codes.begin());
      jobs.push_back(std::move(j));
    }
    return jobs;
  }

  const size_t expect = static_cast<size_t>(l.in_channels) * l.input_height * l.input_width;
  if (act.size() != expect)
    throw Error(ErrorKind::contract, l.name + ": activation size " + std::to_string(act.size()) + " != C*H*W " +
                                         std::to_string(expect));
  const int R = l.kernel, oh = l.output_height(), ow = l.output_width();
  jobs.reserve(static_cast<size_t>(oh) * ow * chunks);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int c = 0; c < chunks; ++c) {
        MacJob j{oy * ow + ox, c, std::min(n, fan_in - c * n), std::vector<uint8_t>(static_cast<size_t>(n), 0)};
        for (int lane = 0; lane < j.active; ++lane) {
          const int idx = c * n + lane;
          const int ci = idx / (R * R), r = (idx / R) % R, s = idx % R;
          const int iy = oy * l.stride - l.padding + r;
          const int ix = ox * l.stride - l.padding + s;
          if (iy < 0 || ix < 0 || iy >= l.input_height || ix >= l.input_width) continue;
          j.codes[static_cast<size_t>(lane)] = act[(static_cast<size_t>(ci) * l.input_height + iy) * l.input_width + ix];
        }
        jobs.push_back(std::move(j));
      }
  return jobs;
}

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::pass_through: return "pass-through";
    case RunMode::ideal: return "ideal";
    case RunMode::variation: return "variation";
  }
  return "ideal";
}

RunMode run_mode_from_string(std::string_view s) {
  if (s == "pass-through" || s == "pass_through") return RunMode::pass_through;
  if (s == "ideal") return RunMode::ideal;
  if (s == "variation") return RunMode::variation;
  throw Error(ErrorKind::input_domain, "unknown run mode: " + std::string(s));
}

uint8_t requantize(long acc, long bias, double multiplier, int bits) {
  const double y = std::floor(static_cast<double>(acc + bias) * multiplier + 0.5);
  return static_cast<uint8_t>(std::clamp(y, 0.0, static_cast<double>((1 << bits) - 1)));
}

std::vector<uint8_t> max_pool(std::span<const uint8_t> x, int channels, int h, int w, int k) {
  if (k == 1) return {x.begin(), x.end()};
  const int ph = h / k, pw = w / k;
  std::vector<uint8_t> out(static_cast<size_t>(channels) * ph * pw, 0);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx) {
        uint8_t m = 0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx)
            m = std::max(m, x[(static_cast<size_t>(c) * h + y * k + dy) * w + xx * k + dx]);
        out[(static_cast<size_t>(c) * ph + y) * pw + xx] = m;
      }
  return out;
}

int argmax(std::span<const long> logits) {
  if (logits.empty()) throw Error(ErrorKind::contract, "argmax of nothing");
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<uint8_t> quantize_image(const uint8_t* pixels, size_t n, int bits) {
  std::vector<uint8_t> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = quantize_pixel(pixels[i], bits);
  return out;
}

namespace {

long bias_of(const QuantizedLayer& L, int oc) { return L.bias.empty() ? 0 : L.bias[static_cast<size_t>(oc)]; }

// Requantize (or emit logits) and pool; advances the activation shape.
std::vector<long> finish_layer(const QuantizedLayer& L, const std::vector<long>& acc, std::vector<uint8_t>& act,
                               int& c, int& h, int& w) {
  const auto& s = L.spec;
  const long positions = s.kind == LayerKind::conv ? s.positions() : 1;
  if (L.logits) {
    std::vector<long> logits(acc.size());
    for (size_t i = 0; i < acc.size(); ++i)
      logits[i] = acc[i] + bias_of(L, static_cast<int>(i / static_cast<size_t>(positions)));
    return logits;
  }
  std::vector<uint8_t> y(acc.size());
  for (size_t i = 0; i < acc.size(); ++i)
    y[i] = requantize(acc[i], bias_of(L, static_cast<int>(i / static_cast<size_t>(positions))), L.requant_multiplier,
                      L.output_bitwidth);
  c = s.out_channels;
  if (s.kind == LayerKind::conv) {
    act = max_pool(y, c, s.output_height(), s.output_width(), s.pool);
    h = s.output_height() / s.pool;
    w = s.output_width() / s.pool;
  } else {
    act = std::move(y);
    h = w = 1;
  }
  return {};
}

}  // namespace

std::vector<long> reference_forward(const QuantizedNetwork& net, std::span<const uint8_t> input) {
  std::vector<uint8_t> act(input.begin(), input.end());
  int c = net.input_channels, h = net.input_height, w = net.input_width;
  for (const auto& L : net.layers) {
    const auto& s = L.spec;
    std::vector<long> acc;
    if (s.kind == LayerKind::fc) {
      if (act.size() != static_cast<size_t>(s.in_channels)) throw Error(ErrorKind::contract, "reference: fc input");
      acc.assign(static_cast<size_t>(s.out_channels), 0);
      for (int o = 0; o < s.out_channels; ++o)
        for (int i = 0; i < s.in_channels; ++i)
          acc[static_cast<size_t>(o)] += long{L.weights[static_cast<size_t>(o) * s.in_channels + i]} * act[static_cast<size_t>(i)];
    } else {
      const int R = s.kernel, oh = s.output_height(), ow = s.output_width();
      acc.assign(static_cast<size_t>(s.out_channels) * oh * ow, 0);
      for (int o = 0; o < s.out_channels; ++o)
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            long sum = 0;
            for (int ci = 0; ci < c; ++ci)
              for (int r = 0; r < R; ++r)
                for (int q = 0; q < R; ++q) {
                  const int iy = oy * s.stride - s.padding + r, ix = ox * s.stride - s.padding + q;
                  if (iy < 0 || ix < 0 || iy >= h || ix >= w) continue;
                  sum += long{L.weights[((static_cast<size_t>(o) * c + ci) * R + r) * R + q]} *
                         act[(static_cast<size_t>(ci) * h + iy) * w + ix];
                }
            acc[(static_cast<size_t>(o) * oh + oy) * ow + ox] = sum;
          }
    }
    auto logits = finish_layer(L, acc, act, c, h, w);
    if (L.logits) return logits;
  }
  throw Error(ErrorKind::contract, "reference: network has no logits layer");
}

Engine::Engine(const QuantizedNetwork& net, const SimConfig& cfg, RunMode mode, uint64_t seed, CalibrationMode calib)
    : net_(net),
      cfg_(cfg),
      mode_(mode),
      calib_(mode == RunMode::variation ? calib : CalibrationMode::none),
      mapping_(map_network(net.specs(), cfg.geometry)),
      image_(cfg.geometry, mapping_.macros) {
  cfg_.validate();
  const auto& g = cfg_.geometry;
  for (size_t li = 0; li < net_.layers.size(); ++li) {
    program_layer(image_, mapping_.layers[li], net_.layers[li].weights, g, static_cast<int>(li));
    if (decode_layer(image_, mapping_.layers[li], g) != net_.layers[li].weights)
      throw Error(ErrorKind::invariant, "mapping of " + net_.layers[li].spec.name + " is not lossless");
  }

  for (int m = 0; m < mapping_.macros; ++m) {
    auto profile = mode == RunMode::variation
                       ? chip_profile(cfg_, seed, m)
                       : VariationProfile::ideal(g);
    sims_.push_back(std::make_unique<MacroSimulator>(g, cfg_.analog, std::move(profile), cfg_.switching));
    if (calib_ != CalibrationMode::none)
      tables_.push_back(characterize(*sims_.back(), cfg_.sweep, calibration_seed(seed, m)).table);
  }

  for (const auto& L : mapping_.layers) {
    std::vector<std::vector<PlaneBits>> per_layer;
    for (const auto& p : L.placements) {
      std::vector<PlaneBits> planes;
      for (int k = 0; k < p.planes; ++k) {
        PlaneBits b;
        b.plus = image_.row_bits(p.macro, p.slice_of_plane(k), p.row);
        if (L.spec.adc_mode == AdcMode::differential) b.minus = image_.row_bits(p.macro, p.slice_of_plane(k) + 1, p.row);
        planes.push_back(std::move(b));
      }
      per_layer.push_back(std::move(planes));
    }
    bits_.push_back(std::move(per_layer));
  }
}

const CalibrationTable* Engine::calibration(int m) const {
  return tables_.empty() ? nullptr : &tables_.at(static_cast<size_t>(m));
}

long Engine::readout_single(int macro, int slice, double v, std::mt19937_64& rng, JobStats& stats) const {
  const auto& sim = *sims_[static_cast<size_t>(macro)];
  ++stats.conversions;
  if (mode_ == RunMode::pass_through) return sim.pass_through(v);
  const AdcCode c = sim.convert_single(slice, v, &rng);
  if (c.saturated) ++stats.saturated;
  double value = c.value();
  if (calib_ != CalibrationMode::none)
    value = tables_[static_cast<size_t>(macro)].correct_single(slice, c, calib_);
  return std::lround(value * cfg_.analog.adc_lsb_pre);
}

long Engine::readout_differential(int macro, int pair, double vp, double vm, std::mt19937_64& rng,
                                  JobStats& stats) const {
  const auto& sim = *sims_[static_cast<size_t>(macro)];
  ++stats.conversions;
  if (mode_ == RunMode::pass_through) return sim.pass_through(vp) - sim.pass_through(vm);
  const AdcCode c = sim.convert_differential(pair, vp, vm, &rng);
  if (c.saturated) ++stats.saturated;
  double value = c.value();
  if (calib_ != CalibrationMode::none)
    value = tables_[static_cast<size_t>(macro)].correct_differential(pair, c, calib_);
  return std::lround(value * cfg_.analog.adc_lsb_pre);
}

long Engine::mac(int layer, int filter, int chunk, std::span<const uint8_t> codes, std::mt19937_64& rng,
                 JobStats& stats) const {
  const auto& L = mapping_.layers.at(static_cast<size_t>(layer));
  const auto& s = L.spec;
  const auto& pl = L.at(filter, chunk);
  const auto& bits = bits_[static_cast<size_t>(layer)][static_cast<size_t>(filter) * L.chunks_per_filter + chunk];
  const auto& sim = *sims_[static_cast<size_t>(pl.macro)];
  const size_t n = static_cast<size_t>(cfg_.geometry.clusters_per_slice);
  if (codes.size() != n) throw Error(ErrorKind::contract, "mac: input vector must have clusters_per_slice lanes");

  const long saturated_before = stats.saturated;
  const int passes = s.nibble_passes();
  std::vector<uint8_t> nib(n);
  std::array<PartialSum, 2> nibble_sums{};
  std::array<long, 8> partials{};
  for (int q = 0; q < passes; ++q) {
    for (size_t i = 0; i < n; ++i) nib[i] = passes == 1 ? codes[i] : static_cast<uint8_t>((codes[i] >> (4 * q)) & 15);
    for (int p = 0; p < L.planes; ++p) {
      const auto& b = bits[static_cast<size_t>(p)];
      const int slice = pl.slice_of_plane(p);
      if (s.encoding == Encoding::twos_complement) {
        const double v = sim.run_slice(slice, nib, b.plus).v_out;
        const bool msb = L.planes > 1 && p == L.planes - 1;
        partials[static_cast<size_t>(p)] =
            sign_transform(readout_single(pl.macro, slice, v, rng, stats), msb, s.encoding, p, q).value;
      } else {
        const double vp = sim.run_slice(slice, nib, b.plus).v_out;
        const double vm = sim.run_slice(slice + 1, nib, b.minus).v_out;
        partials[static_cast<size_t>(p)] = readout_differential(pl.macro, pl.adc_of_plane(p), vp, vm, rng, stats);
      }
    }
    nibble_sums[static_cast<size_t>(q)] =
        PartialSum{tree_combine(std::span<const long>(partials.data(), static_cast<size_t>(L.planes)),
                                TreeConfig{L.tree_level, s.encoding}),
                   0, q};
  }
  const long total = passes == 1 ? nibble_sums[0].value : accumulate_nibbles(nibble_sums[0], nibble_sums[1]);

  if (mode_ != RunMode::variation) {
    const auto& w = net_.layers[static_cast<size_t>(layer)].weights;
    const size_t base = static_cast<size_t>(filter) * s.fan_in() + static_cast<size_t>(chunk) * n;
    long exact = 0;
    for (int i = 0; i < pl.length; ++i) exact += long{w[base + static_cast<size_t>(i)]} * codes[static_cast<size_t>(i)];
    if (mode_ == RunMode::pass_through && total != exact)
      throw Error(ErrorKind::invariant, "pass-through MAC differs from the integer MAC in " + s.name);
    if (mode_ == RunMode::ideal && stats.saturated == saturated_before) {
      const double half = cfg_.analog.adc_lsb_pre / 2.0;
      double bound = 0.0;
      for (int q = 0; q < passes; ++q) bound += std::pow(16.0, q) * ((1 << L.planes) - 1) * half;
      ++stats.bound_checks;
      if (std::abs(total - exact) > bound + 1e-9)
        throw Error(ErrorKind::invariant, "quantization error bound violated in " + s.name);
    }
  }
  return total;
}

std::vector<long> Engine::forward(std::span<const uint8_t> input, std::mt19937_64& rng, JobStats& stats) const {
  std::vector<uint8_t> act(input.begin(), input.end());
  int c = net_.input_channels, h = net_.input_height, w = net_.input_width;
  for (size_t li = 0; li < net_.layers.size(); ++li) {
    const auto& L = net_.layers[li];
    const auto& s = L.spec;
    const long positions = s.kind == LayerKind::conv ? s.positions() : 1;
    std::vector<long> acc(static_cast<size_t>(s.out_channels * positions), 0);
    for (const auto& job : lower_convolution(s, act, cfg_.geometry))
      for (int f = 0; f < s.out_channels; ++f)
        acc[static_cast<size_t>(f * positions + job.position)] +=
            mac(static_cast<int>(li), f, job.chunk, job.codes, rng, stats);
    auto logits = finish_layer(L, acc, act, c, h, w);
    if (L.logits) return logits;
  }
  throw Error(ErrorKind::contract, "forward: network has no logits layer");
}

namespace {

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, std::max(n, 1));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&](int t) {
    try {
      for (int i = next++; i < n; i = next++) fn(i, t);
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!failure) failure = std::current_exception();
      next = n;
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

int image_count(const ImageBatch& images, std::span<const uint8_t> labels, int limit) {
  int n = images.count;
  if (limit > 0) n = std::min(n, limit);
  if (static_cast<int>(labels.size()) < n) throw Error(ErrorKind::data, "fewer labels than images");
  return n;
}

void check_input(const QuantizedNetwork& net, const ImageBatch& images) {
  if (net.input_channels != 1 || images.rows != net.input_height || images.cols != net.input_width)
    throw Error(ErrorKind::data, "image size does not match the model input");
}

void score(RunReport& r, std::span<const uint8_t> labels) {
  r.correct = 0;
  for (size_t i = 0; i < r.predictions.size(); ++i) {
    r.labels.push_back(labels[i]);
    if (r.predictions[i] == labels[i]) ++r.correct;
  }
  r.accuracy = r.predictions.empty() ? 0.0 : static_cast<double>(r.correct) / r.predictions.size();
}

}  // namespace

RunReport run_inference(const QuantizedNetwork& net, const ImageBatch& images, std::span<const uint8_t> labels,
                        const SimConfig& cfg, const RunOptions& opt) {
  check_input(net, images);
  const int n = image_count(images, labels, opt.limit);
  const Engine engine(net, cfg, opt.mode, opt.seed, opt.calib);
  const int bits = net.layers.front().spec.input_bitwidth;
  const size_t pixels = static_cast<size_t>(images.rows) * images.cols;

  RunReport r;
  r.model = net.name;
  r.mode = opt.mode;
  r.calib = opt.mode == RunMode::variation ? opt.calib : CalibrationMode::none;
  r.seed = opt.seed;
  r.config_hash = cfg.hash();
  r.schedule = schedule(engine.mapping());
  r.predictions.assign(static_cast<size_t>(n), -1);

  std::vector<JobStats> per_image(static_cast<size_t>(n));
  const uint64_t stream = derive_seed(opt.seed, 300);
  parallel_for(n, opt.threads, [&](int i, int) {
    std::mt19937_64 rng(derive_seed(stream, static_cast<uint64_t>(i)));
    const auto x = quantize_image(images.image(i), pixels, bits);
    r.predictions[static_cast<size_t>(i)] = argmax(engine.forward(x, rng, per_image[static_cast<size_t>(i)]));
  });
  for (const auto& s : per_image) r.stats.merge(s);
  score(r, labels);
  return r;
}

RunReport run_reference(const QuantizedNetwork& net, const ImageBatch& images, std::span<const uint8_t> labels,
                        int limit) {
  check_input(net, images);
  const int n = image_count(images, labels, limit);
  const int bits = net.layers.front().spec.input_bitwidth;
  const size_t pixels = static_cast<size_t>(images.rows) * images.cols;
  RunReport r;
  r.model = net.name;
  r.mode = RunMode::pass_through;
  r.schedule = schedule(map_network(net.specs(), default_geometry()));
  for (int i = 0; i < n; ++i)
    r.predictions.push_back(argmax(reference_forward(net, quantize_image(images.image(i), pixels, bits))));
  score(r, labels);
  return r;
}

std::string RunReport::to_json() const {
  json layers = json::array();
  for (const auto& e : schedule.layers)
    layers.push_back({{"name", e.name}, {"positions", e.positions}, {"cycles_per_pass", e.cycles_per_pass},
                      {"nibble_passes", e.nibble_passes}, {"mac_cycles", e.mac_cycles}});
  json j = {{"model", model},
            {"mode", to_string(mode)},
            {"calibration", to_string(calib)},
            {"seed", seed},
            {"config_hash", config_hash},
            {"images", predictions.size()},
            {"correct", correct},
            {"accuracy", accuracy},
            {"cycles", {{"layers", layers}, {"total_cycles_per_pass", schedule.total_cycles_per_pass},
                        {"total_mac_cycles", schedule.total_mac_cycles}}},
            {"conversions", stats.conversions},
            {"saturated_conversions", stats.saturated},
            {"bound_checks", stats.bound_checks},
            {"predictions", predictions}};
  return j.dump(2);
}

std::string RunReport::predictions_csv() const {
  std::string out = "image,prediction,label\n";
  for (size_t i = 0; i < predictions.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(predictions[i]) + "," +
           (i < labels.size() ? std::to_string(labels[i]) : std::string()) + "\n";
  return out;
}

}  // namespace cimsim
