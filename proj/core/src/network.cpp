#include "cimsim/network.hpp"

#include <json.hpp>
#include <zlib.h>

#include <fstream>
#include <iterator>

namespace cimsim {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(ModelErrorReason r) {
  switch (r) {
    case ModelErrorReason::malformed: return "malformed manifest";
    case ModelErrorReason::version_mismatch: return "version mismatch";
    case ModelErrorReason::checksum_failure: return "checksum failure";
    case ModelErrorReason::bitwidth_violation: return "bitwidth violation";
    case ModelErrorReason::shape_mismatch: return "shape mismatch";
  }
  return "model error";
}

std::vector<LayerSpec> QuantizedNetwork::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers) out.push_back(l.spec);
  return out;
}

uint32_t crc32_of(const void* data, size_t size) {
  uLong c = crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const uInt n = static_cast<uInt>(std::min<size_t>(size, 1u << 30));
    c = crc32(c, p, n);
    p += n;
    size -= n;
  }
  return static_cast<uint32_t>(c);
}

std::vector<uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::data, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void validate(const QuantizedNetwork& net) {
  using R = ModelErrorReason;
  if (net.layers.empty()) throw ModelError(R::malformed, "network has no layers");
  int c = net.input_channels, h = net.input_height, w = net.input_width;
  int bits = net.input_bitwidth;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const auto& L = net.layers[i];
    const auto& s = L.spec;
    try {
      validate(s);
    } catch (const Error& e) {
      throw ModelError(R::malformed, e.what());
    }
    if (s.kind == LayerKind::conv) {
      if (s.in_channels != c || s.input_height != h || s.input_width != w)
        throw ModelError(R::shape_mismatch, s.name + ": input shape does not match the previous layer");
    } else if (s.in_channels != c * h * w) {
      throw ModelError(R::shape_mismatch, s.name + ": in_features does not match the previous layer");
    }
    if (i > 0 && s.input_bitwidth != bits)
      throw ModelError(R::bitwidth_violation, s.name + ": input bitwidth differs from previous output bitwidth");
    if (L.weights.size() != static_cast<size_t>(s.fan_in()) * s.out_channels)
      throw ModelError(R::shape_mismatch, s.name + ": weight count does not match the layer shape");
    const int lo = s.encoding == Encoding::ternary ? -ternary_max(s.weight_bitwidth) : twos_min(s.weight_bitwidth);
    const int hi = s.encoding == Encoding::ternary ? ternary_max(s.weight_bitwidth) : twos_max(s.weight_bitwidth);
    for (size_t k = 0; k < L.weights.size(); ++k)
      if (L.weights[k] < lo || L.weights[k] > hi)
        throw ModelError(R::bitwidth_violation, s.name + ": weight " + std::to_string(L.weights[k]) + " at index " +
                                                    std::to_string(k) + " outside " +
                                                    std::to_string(s.weight_bitwidth) + "-bit range");
    if (!L.bias.empty() && L.bias.size() != static_cast<size_t>(s.out_channels))
      throw ModelError(R::shape_mismatch, s.name + ": bias length");
    if (L.logits) {
      if (i + 1 != net.layers.size()) throw ModelError(R::malformed, s.name + ": only the last layer emits logits");
    } else {
      if (!(L.requant_multiplier > 0.0)) throw ModelError(R::malformed, s.name + ": requant multiplier must be > 0");
      if (L.output_bitwidth < 1 || L.output_bitwidth > 8)
        throw ModelError(R::bitwidth_violation, s.name + ": output bitwidth must be 1..8");
    }
    c = s.out_channels;
    h = s.kind == LayerKind::conv ? s.output_height() / s.pool : 1;
    w = s.kind == LayerKind::conv ? s.output_width() / s.pool : 1;
    bits = L.output_bitwidth;
  }
  if (!net.layers.back().logits) throw ModelError(R::malformed, "last layer must emit logits");
}

namespace {

LayerSpec spec_from_json(const json& j) {
  LayerSpec s;
  s.name = j.at("name").get<std::string>();
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  if (s.kind == LayerKind::fc) {
    s.in_channels = j.at("in_features").get<int>();
    s.out_channels = j.at("out_features").get<int>();
  } else {
    s.kernel = j.at("kernel").get<int>();
    s.in_channels = j.at("in_channels").get<int>();
    s.out_channels = j.at("out_channels").get<int>();
    s.input_height = j.at("input_height").get<int>();
    s.input_width = j.at("input_width").get<int>();
    s.stride = j.value("stride", 1);
    s.padding = j.value("padding", 0);
  }
  s.input_bitwidth = j.at("input_bitwidth").get<int>();
  s.weight_bitwidth = j.at("weight_bitwidth").get<int>();
  s.encoding = encoding_from_string(j.at("encoding").get<std::string>());
  s.adc_mode = adc_mode_from_string(j.at("adc_mode").get<std::string>());
  s.pool = j.value("pool", 1);
  return s;
}

json spec_to_json(const LayerSpec& s) {
  json j = {{"name", s.name}, {"kind", to_string(s.kind)}};
  if (s.kind == LayerKind::fc) {
    j["in_features"] = s.in_channels;
    j["out_features"] = s.out_channels;
  } else {
    j["kernel"] = s.kernel;
    j["in_channels"] = s.in_channels;
    j["out_channels"] = s.out_channels;
    j["stride"] = s.stride;
    j["padding"] = s.padding;
    j["input_height"] = s.input_height;
    j["input_width"] = s.input_width;
  }
  j["input_bitwidth"] = s.input_bitwidth;
  j["weight_bitwidth"] = s.weight_bitwidth;
  j["encoding"] = to_string(s.encoding);
  j["adc_mode"] = to_string(s.adc_mode);
  j["pool"] = s.pool;
  return j;
}

}  // namespace

QuantizedNetwork load_model(const fs::path& manifest, const fs::path& blob_path) {
  using R = ModelErrorReason;
  json j;
  try {
    const auto text = read_file(manifest);
    j = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ModelError(R::malformed, manifest.string() + ": " + e.what());
  }
  if (j.value("format", "") != "cimsim-model") throw ModelError(R::malformed, "not a cimsim-model manifest");
  if (!j.contains("version") || j["version"] != kModelVersion)
    throw ModelError(R::version_mismatch, "manifest version " + j.value("version", json()).dump() + ", expected " +
                                              std::to_string(kModelVersion));
  QuantizedNetwork net;
  std::vector<uint8_t> blob;
  try {
    net.name = j.value("name", "");
    const auto& in = j.at("input");
    net.input_channels = in.at("channels").get<int>();
    net.input_height = in.at("height").get<int>();
    net.input_width = in.at("width").get<int>();
    net.input_bitwidth = in.value("bitwidth", 8);

    const auto& b = j.at("blob");
    fs::path bp = blob_path;
    if (bp.empty()) bp = manifest.parent_path() / b.at("file").get<std::string>();
    blob = read_file(bp);
    const auto size = b.at("size").get<size_t>();
    const auto crc = b.at("crc32").get<uint32_t>();
    if (blob.size() != size)
      throw ModelError(R::checksum_failure, "blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                                                std::to_string(size));
    if (crc32_of(blob.data(), blob.size()) != crc) throw ModelError(R::checksum_failure, "blob crc32 mismatch");

    for (const auto& lj : j.at("layers")) {
      QuantizedLayer L;
      L.spec = spec_from_json(lj);
      const auto off = lj.at("weight_offset").get<size_t>();
      const auto count = lj.at("weight_count").get<size_t>();
      if (off + count > blob.size()) throw ModelError(R::shape_mismatch, L.spec.name + ": weights run past the blob");
      L.weights.resize(count);
      for (size_t k = 0; k < count; ++k) L.weights[k] = static_cast<int8_t>(blob[off + k]);
      L.bias = lj.value("bias", std::vector<long>{});
      L.logits = lj.value("output", "") == "logits";
      if (!L.logits) {
        L.requant_multiplier = lj.at("requant_multiplier").get<double>();
        L.output_bitwidth = lj.at("output_bitwidth").get<int>();
      }
      net.layers.push_back(std::move(L));
    }
  } catch (const json::exception& e) {
    throw ModelError(R::malformed, e.what());
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(R::malformed, e.what());
  }
  validate(net);
  return net;
}

void save_model(const QuantizedNetwork& net, const fs::path& manifest, const fs::path& blob_path) {
  validate(net);
  std::vector<uint8_t> blob;
  json layers = json::array();
  for (const auto& L : net.layers) {
    json lj = spec_to_json(L.spec);
    lj["weight_offset"] = blob.size();
    lj["weight_count"] = L.weights.size();
    for (auto w : L.weights) blob.push_back(static_cast<uint8_t>(w));
    lj["bias"] = L.bias;
    if (L.logits) {
      lj["output"] = "logits";
    } else {
      lj["requant_multiplier"] = L.requant_multiplier;
      lj["output_bitwidth"] = L.output_bitwidth;
    }
    layers.push_back(lj);
  }
  json j = {{"format", "cimsim-model"},
            {"version", kModelVersion},
            {"name", net.name},
            {"input", {{"channels", net.input_channels}, {"height", net.input_height}, {"width", net.input_width},
                       {"bitwidth", net.input_bitwidth}}},
            {"blob", {{"file", blob_path.filename().string()}, {"size", blob.size()},
                      {"crc32", crc32_of(blob.data(), blob.size())}}},
            {"layers", layers}};
  std::ofstream(manifest) << j.dump(2) << '\n';
  std::ofstream(blob_path, std::ios::binary).write(reinterpret_cast<const char*>(blob.data()),
                                                    static_cast<std::streamsize>(blob.size()));
}

namespace {

uint32_t be32(const std::vector<uint8_t>& b, size_t off) {
  return (uint32_t{b[off]} << 24) | (uint32_t{b[off + 1]} << 16) | (uint32_t{b[off + 2]} << 8) | uint32_t{b[off + 3]};
}

}  // namespace

ImageBatch parse_idx_images(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 16) throw Error(ErrorKind::data, "idx images: truncated header");
  if (be32(bytes, 0) != 0x00000803u) throw Error(ErrorKind::data, "idx images: bad magic");
  ImageBatch b;
  b.count = static_cast<int>(be32(bytes, 4));
  b.rows = static_cast<int>(be32(bytes, 8));
  b.cols = static_cast<int>(be32(bytes, 12));
  if (b.count <= 0 || b.rows <= 0 || b.cols <= 0) throw Error(ErrorKind::data, "idx images: empty dimension");
  const size_t n = static_cast<size_t>(b.count) * b.rows * b.cols;
  if (bytes.size() - 16 != n) throw Error(ErrorKind::data, "idx images: dimension mismatch with payload size");
  b.pixels.assign(bytes.begin() + 16, bytes.end());
  return b;
}

std::vector<uint8_t> parse_idx_labels(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8) throw Error(ErrorKind::data, "idx labels: truncated header");
  if (be32(bytes, 0) != 0x00000801u) throw Error(ErrorKind::data, "idx labels: bad magic");
  const size_t n = be32(bytes, 4);
  if (n == 0) throw Error(ErrorKind::data, "idx labels: empty dimension");
  if (bytes.size() - 8 != n) throw Error(ErrorKind::data, "idx labels: dimension mismatch with payload size");
  return {bytes.begin() + 8, bytes.end()};
}

ImageBatch load_images(const fs::path& path) { return parse_idx_images(read_file(path)); }
std::vector<uint8_t> load_labels(const fs::path& path) { return parse_idx_labels(read_file(path)); }

uint8_t quantize_pixel(uint8_t p, int bits) {
  if (bits < 1 || bits > 8) throw Error(ErrorKind::input_domain, "quantize_pixel: bits must be 1..8");
  const int top = (1 << bits) - 1;
  return static_cast<uint8_t>((p * top * 2 + 255) / 510);
}

}  // namespace cimsim
