#pragma once

#include "cimsim/calibration.hpp"
#include "cimsim/config.hpp"
#include "cimsim/macro_sim.hpp"
#include "cimsim/mapping.hpp"
#include "cimsim/network.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace cimsim {

// One slice-wide input vector of a lowered layer.
struct MacJob {
  int position = 0;  // output position (row-major over the output map); 0 for fc
  int chunk = 0;     // which 128-weight chunk of every filter it feeds
  int active = 0;    // lanes that carry a receptive-field element
  std::vector<uint8_t> codes;  // clusters_per_slice lanes, zero padded
};

// im2col: activations are [C][H][W] for conv layers or flat for fc layers.
// Lane order within a receptive field matches the weight layout [in][R][R].
std::vector<MacJob> lower_convolution(const LayerSpec& layer, std::span<const uint8_t> activations,
                                      const MacroGeometry& g);

enum class RunMode { pass_through, ideal, variation };
std::string_view to_string(RunMode m);
RunMode run_mode_from_string(std::string_view s);

// y = clamp(floor((acc + bias) * m + 0.5), 0, 2^bits - 1)
uint8_t requantize(long acc, long bias, double multiplier, int bits);
// Max-pool over non-overlapping windows of a [C][H][W] map.
std::vector<uint8_t> max_pool(std::span<const uint8_t> x, int channels, int h, int w, int window);

// Pure-integer forward pass on one image (pixels already at the input
// bitwidth of the first layer). Returns the logits.
std::vector<long> reference_forward(const QuantizedNetwork& net, std::span<const uint8_t> input);
int argmax(std::span<const long> logits);
std::vector<uint8_t> quantize_image(const uint8_t* pixels, size_t n, int bits);

struct JobStats {
  long conversions = 0;
  long saturated = 0;
  long bound_checks = 0;
  void merge(const JobStats& o) {
    conversions += o.conversions;
    saturated += o.saturated;
    bound_checks += o.bound_checks;
  }
};

// A network programmed into simulated macros. Immutable once built; every
// call takes its own RNG.
class Engine {
 public:
  Engine(const QuantizedNetwork& net, const SimConfig& cfg, RunMode mode, uint64_t seed = 0,
         CalibrationMode calib = CalibrationMode::two_step);

  const NetworkMapping& mapping() const { return mapping_; }
  const MacroImage& image() const { return image_; }
  const MacroSimulator& macro(int m) const { return *sims_.at(static_cast<size_t>(m)); }
  const CalibrationTable* calibration(int m) const;
  RunMode mode() const { return mode_; }

  // One filter chunk against one input vector: bit-serial over input
  // nibbles and weight planes, then shift-add. In ideal mode the result is
  // checked against the exact integer MAC and the half-LSB bound.
  long mac(int layer, int filter, int chunk, std::span<const uint8_t> codes, std::mt19937_64& rng,
           JobStats& stats) const;

  std::vector<long> forward(std::span<const uint8_t> input, std::mt19937_64& rng, JobStats& stats) const;

 private:
  long readout_single(int macro, int slice, double v, std::mt19937_64& rng, JobStats& stats) const;
  long readout_differential(int macro, int pair, double vp, double vm, std::mt19937_64& rng, JobStats& stats) const;

  QuantizedNetwork net_;
  SimConfig cfg_;
  RunMode mode_;
  CalibrationMode calib_;
  NetworkMapping mapping_;
  MacroImage image_;
  std::vector<std::unique_ptr<MacroSimulator>> sims_;
  std::vector<CalibrationTable> tables_;
  // bits_[layer][placement][plane]: "+" slice row (and "-" slice row for ternary)
  struct PlaneBits {
    std::vector<uint8_t> plus;
    std::vector<uint8_t> minus;
  };
  std::vector<std::vector<std::vector<PlaneBits>>> bits_;
};

struct RunOptions {
  RunMode mode = RunMode::ideal;
  uint64_t seed = 0;
  CalibrationMode calib = CalibrationMode::two_step;
  int limit = 0;    // 0 = every image
  int threads = 0;  // 0 = hardware concurrency
};

struct RunReport {
  std::string model;
  RunMode mode = RunMode::ideal;
  CalibrationMode calib = CalibrationMode::none;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<int> predictions;
  std::vector<int> labels;
  int correct = 0;
  double accuracy = 0.0;
  Schedule schedule;
  JobStats stats;

  std::string to_json() const;
  std::string predictions_csv() const;
};

RunReport run_inference(const QuantizedNetwork& net, const ImageBatch& images, std::span<const uint8_t> labels,
                        const SimConfig& cfg, const RunOptions& opt);
RunReport run_reference(const QuantizedNetwork& net, const ImageBatch& images, std::span<const uint8_t> labels,
                        int limit = 0);

}  // namespace cimsim
