#include "cimsim/config.hpp"
#include "cimsim/error.hpp"
#include "cimsim/macro_config.hpp"

#include <doctest.h>

#include <algorithm>

using namespace cimsim;

namespace {

bool has(const std::vector<Violation>& v, const std::string& field) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.field == field; });
}

}  // namespace

TEST_CASE("default geometry is the 512x128 macro") {
  const auto g = default_geometry();
  CHECK(g.rows == 512);
  CHECK(g.cols == 128);
  CHECK(g.slices == 64);
  CHECK(g.slice_pairs == 32);
  CHECK(g.cells_per_cluster == 8);
  CHECK(g.clusters_per_slice == 128);
  CHECK(max_pre_adc(g) == 1920);
  CHECK(validate(g, AnalogParams{}).empty());
  CHECK(AnalogParams{}.adc_lsb_pre == 1920.0 / 64);
}

TEST_CASE("validation names every broken field") {
  MacroGeometry g;
  g.rows = 500;
  g.slice_pairs = 31;
  AnalogParams a;
  a.dac_step = 0.05;  // 1.2 - 0.75 < 0.6
  a.c_p = 0;
  const auto v = validate(g, a);
  CHECK(has(v, "rows"));
  CHECK(has(v, "slice_pairs"));
  CHECK(has(v, "dac_step"));
  CHECK(has(v, "c_p"));
  CHECK(v.size() >= 4);

  MacroGeometry g2;
  g2.cols = 64;
  CHECK(has(validate(g2, AnalogParams{}), "clusters_per_slice"));
  AnalogParams a2;
  a2.adc_lsb_pre = 31;
  CHECK(has(validate(MacroGeometry{}, a2), "adc_lsb_pre"));
}

TEST_CASE("config round trip and per-field overrides") {
  SimConfig c;
  const auto back = SimConfig::from_json(c.to_json());
  CHECK(back.hash() == c.hash());
  CHECK(c.hash().size() == 8);

  const auto o = SimConfig::from_json(R"({"analog": {"c_gs": 0.1}, "variation": {"gain_sigma": 0.01},
                                         "switching_error": true})");
  CHECK(o.analog.c_gs == 0.1);
  CHECK(o.analog.vdd == 1.2);  // untouched
  CHECK(o.variation.gain_sigma == 0.01);
  CHECK(o.variation.offset_sigma == 2.0);
  CHECK(o.switching == SwitchingError::on);
  CHECK(o.hash() != c.hash());

  CHECK(SimConfig::from_json("{}").hash() == c.hash());
}

TEST_CASE("config errors") {
  try {
    SimConfig::from_json(R"({"geometry": {"rows": 100}, "variation": {"gain_sigma": -1}})");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::input_domain);
    CHECK(std::string(e.what()).find("rows") != std::string::npos);
    CHECK(std::string(e.what()).find("sigma") != std::string::npos);
  }
  try {
    SimConfig::from_json("{not json");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
  }
  CHECK_THROWS_AS(SimConfig::from_json(R"({"analog": {"vdd": "high"}})"), Error);
}

TEST_CASE("chip streams are deterministic and distinct") {
  SimConfig c;
  const auto a = chip_profile(c, 5, 0);
  const auto b = chip_profile(c, 5, 0);
  const auto other = chip_profile(c, 5, 1);
  CHECK(a.slices[3].gain == b.slices[3].gain);
  CHECK(a.slices[3].gain != other.slices[3].gain);
  CHECK(calibration_seed(5, 0) != calibration_seed(5, 1));
}
