#pragma once

#include "cimsim/error.hpp"
#include "cimsim/mapping.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cimsim {

struct QuantizedLayer {
  LayerSpec spec;
  std::vector<int8_t> weights;  // [out][in][R][R]
  std::vector<long> bias;       // accumulator units, added before requantization; empty = none
  double requant_multiplier = 1.0;
  int output_bitwidth = 4;
  bool logits = false;          // last layer: raw accumulator + bias, no requantization
};

struct QuantizedNetwork {
  std::string name;
  int input_channels = 1;
  int input_height = 28;
  int input_width = 28;
  int input_bitwidth = 8;
  std::vector<QuantizedLayer> layers;

  std::vector<LayerSpec> specs() const;
};

enum class ModelErrorReason { malformed, version_mismatch, checksum_failure, bitwidth_violation, shape_mismatch };
const char* to_string(ModelErrorReason r);

class ModelError : public Error {
 public:
  ModelError(ModelErrorReason reason, const std::string& what)
      : Error(ErrorKind::data, std::string(to_string(reason)) + ": " + what), reason_(reason) {}
  ModelErrorReason reason() const { return reason_; }

 private:
  ModelErrorReason reason_;
};

inline constexpr int kModelVersion = 1;

// Checks weight ranges, scales and that each layer's input matches the
// previous layer's output. Throws ModelError.
void validate(const QuantizedNetwork& net);

// Blob path defaults to the "blob.file" entry of the manifest, resolved
// relative to the manifest directory.
QuantizedNetwork load_model(const std::filesystem::path& manifest, const std::filesystem::path& blob = {});
void save_model(const QuantizedNetwork& net, const std::filesystem::path& manifest, const std::filesystem::path& blob);

uint32_t crc32_of(const void* data, size_t size);

struct ImageBatch {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> pixels;  // count * rows * cols
  const uint8_t* image(int i) const { return pixels.data() + static_cast<size_t>(i) * rows * cols; }
};

// IDX files: big-endian magic 0x00000803 (images) / 0x00000801 (labels).
ImageBatch load_images(const std::filesystem::path& path);
std::vector<uint8_t> load_labels(const std::filesystem::path& path);
ImageBatch parse_idx_images(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes);

// 8-bit pixel to a `bits`-wide code, round half up.
uint8_t quantize_pixel(uint8_t p, int bits);

std::vector<uint8_t> read_file(const std::filesystem::path& path);

}  // namespace cimsim
