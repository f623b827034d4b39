#include "cimsim/error.hpp"
#include "cimsim/network.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace cimsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CIMSIM_TEST_DATA;

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cimsim_test_network_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json read_json(const fs::path& p) {
  const auto b = read_file(p);
  return json::parse(b.begin(), b.end());
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

void write_bytes(const fs::path& p, const std::vector<uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Copies the fixture into a scratch dir and lets the caller tamper with it.
template <class F>
ModelErrorReason load_error(const std::string& name, F&& tamper) {
  const auto d = scratch(name);
  auto j = read_json(kData / "lenet5_standin.json");
  auto blob = read_file(kData / "lenet5_standin.bin");
  tamper(j, blob);
  write_json(d / "m.json", j);
  write_bytes(d / "lenet5_standin.bin", blob);
  try {
    load_model(d / "m.json");
  } catch (const ModelError& e) {
    return e.reason();
  }
  FAIL("model loaded");
  return ModelErrorReason::malformed;
}

void refresh_crc(json& j, const std::vector<uint8_t>& blob) {
  j["blob"]["size"] = blob.size();
  j["blob"]["crc32"] = crc32_of(blob.data(), blob.size());
}

// independent big-endian IDX reader
std::vector<uint8_t> first_image(const fs::path& p, uint32_t& count) {
  std::ifstream in(p, std::ios::binary);
  unsigned char h[16];
  in.read(reinterpret_cast<char*>(h), 16);
  auto be = [&](int o) { return uint32_t{h[o]} << 24 | uint32_t{h[o + 1]} << 16 | uint32_t{h[o + 2]} << 8 | h[o + 3]; };
  count = be(4);
  std::vector<uint8_t> px(be(8) * be(12));
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  return px;
}

}  // namespace

TEST_CASE("fixture loads") {
  const auto net = load_model(kData / "lenet5_standin.json");
  REQUIRE(net.layers.size() == 4);
  CHECK(net.layers[0].spec.name == "C1");
  CHECK(net.layers[0].weights.size() == 5u * 25);
  CHECK(net.layers[1].spec.encoding == Encoding::ternary);
  CHECK(net.layers.back().logits);
  CHECK(net.specs().size() == 4);
  CHECK_NOTHROW(validate(net));
}

TEST_CASE("one error per failure reason") {
  using R = ModelErrorReason;
  CHECK(load_error("malformed", [](json& j, auto&) { j.erase("layers"); }) == R::malformed);
  CHECK(load_error("format", [](json& j, auto&) { j["format"] = "onnx"; }) == R::malformed);
  CHECK(load_error("version", [](json& j, auto&) { j["version"] = 2; }) == R::version_mismatch);
  CHECK(load_error("truncated", [](json&, std::vector<uint8_t>& b) { b.resize(b.size() - 7); }) ==
        R::checksum_failure);
  CHECK(load_error("flipped", [](json&, std::vector<uint8_t>& b) { b[10] ^= 1; }) == R::checksum_failure);
  CHECK(load_error("bitwidth", [](json& j, std::vector<uint8_t>& b) {
          // first ternary weight of C3 (2-bit) set to 3
          b[j["layers"][1]["weight_offset"].get<size_t>()] = 3;
          refresh_crc(j, b);
        }) == R::bitwidth_violation);
  CHECK(load_error("shape", [](json& j, auto&) { j["layers"][2]["in_features"] = 255; }) == R::shape_mismatch);
  CHECK(load_error("overrun", [](json& j, auto&) { j["layers"][3]["weight_offset"] = 1u << 20; }) ==
        R::shape_mismatch);

  try {
    load_model(kData / "does_not_exist.json");
    FAIL("loaded a missing file");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
}

TEST_CASE("save and load round trip") {
  const auto net = load_model(kData / "lenet5_standin.json");
  const auto d = scratch("roundtrip");
  save_model(net, d / "copy.json", d / "copy.bin");
  const auto back = load_model(d / "copy.json");
  REQUIRE(back.layers.size() == net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].weights == net.layers[i].weights);
    CHECK(back.layers[i].bias == net.layers[i].bias);
    CHECK(back.layers[i].requant_multiplier == net.layers[i].requant_multiplier);
    CHECK(back.layers[i].spec.name == net.layers[i].spec.name);
  }
  CHECK(read_file(d / "copy.bin") == read_file(kData / "lenet5_standin.bin"));
}

TEST_CASE("idx images and labels") {
  const auto imgs = load_images(kData / "mnist500-images.idx3-ubyte");
  const auto labels = load_labels(kData / "mnist500-labels.idx1-ubyte");
  uint32_t count = 0;
  const auto px = first_image(kData / "mnist500-images.idx3-ubyte", count);
  CHECK(imgs.count == static_cast<int>(count));
  CHECK(imgs.count == 500);
  CHECK(labels.size() == 500);
  CHECK(imgs.rows == 28);
  CHECK(imgs.cols == 28);
  CHECK(crc32_of(imgs.image(0), 784) == crc32_of(px.data(), px.size()));
  for (auto l : labels) CHECK(l < 10);

  auto bytes = read_file(kData / "mnist500-images.idx3-ubyte");
  auto bad = bytes;
  bad[3] = 0x01;
  CHECK_THROWS_AS(parse_idx_images(bad), Error);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(parse_idx_images(bad), Error);
  bad.assign(bytes.begin(), bytes.begin() + 16);
  bad[4] = bad[5] = bad[6] = bad[7] = 0;
  CHECK_THROWS_AS(parse_idx_images(bad), Error);
  CHECK_THROWS_AS(parse_idx_images({0, 0, 8}), Error);
  CHECK_THROWS_AS(parse_idx_labels({0, 0, 8, 1, 0, 0, 0, 0}), Error);
  CHECK_THROWS_AS(parse_idx_labels({0, 0, 8, 3, 0, 0, 0, 2, 1}), Error);
}

TEST_CASE("pixel quantization") {
  CHECK(quantize_pixel(0, 4) == 0);
  CHECK(quantize_pixel(255, 4) == 15);
  CHECK(quantize_pixel(255, 8) == 255);
  CHECK(quantize_pixel(17, 8) == 17);
  CHECK(quantize_pixel(9, 4) == 1);  // 9*15/255 = 0.53
  CHECK(quantize_pixel(8, 4) == 0);  // 0.47
  CHECK(quantize_pixel(128, 1) == 1);
  CHECK(quantize_pixel(127, 1) == 0);
  CHECK_THROWS_AS(quantize_pixel(1, 0), Error);
  for (int bits = 1; bits <= 8; ++bits) {
    int prev = 0;
    for (int p = 0; p < 256; ++p) {
      const int q = quantize_pixel(static_cast<uint8_t>(p), bits);
      CHECK(q >= prev);
      CHECK(std::abs(q - p * ((1 << bits) - 1) / 255.0) <= 0.5 + 1e-9);
      prev = q;
    }
  }
}
