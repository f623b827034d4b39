#include "cimsim/config.hpp"

#include "cimsim/error.hpp"
#include "cimsim/network.hpp"

#include <fmt/format.h>
#include <json.hpp>

namespace cimsim {

using nlohmann::json;

namespace {

json to_j(const SimConfig& c) {
  const auto& g = c.geometry;
  const auto& a = c.analog;
  const auto& v = c.variation;
  return {{"geometry", {{"rows", g.rows}, {"cols", g.cols}, {"cells_per_cluster", g.cells_per_cluster},
                        {"slices", g.slices}, {"slice_pairs", g.slice_pairs},
                        {"clusters_per_slice", g.clusters_per_slice}}},
          {"analog", {{"vdd", a.vdd}, {"c_mom", a.c_mom}, {"c_p", a.c_p}, {"c_gs", a.c_gs},
                      {"ci_channel_cap", a.ci_channel_cap}, {"v_th", a.v_th}, {"dac_step", a.dac_step},
                      {"adc_lsb_pre", a.adc_lsb_pre}}},
          {"variation", {{"gain_sigma", v.gain_sigma}, {"offset_sigma", v.offset_sigma},
                         {"ci_mismatch_sigma", v.ci_mismatch_sigma},
                         {"comparator_noise_sigma", v.comparator_noise_sigma},
                         {"switching_error_sigma", v.switching_error_sigma}}},
          {"switching_error", c.switching == SwitchingError::on},
          {"sweep", {{"repeats", c.sweep.repeats}, {"step", c.sweep.step}}}};
}

template <typename T>
void take(const json& section, const char* key, T& field) {
  if (section.contains(key)) field = section.at(key).get<T>();
}

}  // namespace

std::string SimConfig::to_json() const { return to_j(*this).dump(2); }

SimConfig SimConfig::from_json(std::string_view text) {
  SimConfig c;
  try {
    const json j = json::parse(text);
    const json empty = json::object();
    const auto& g = j.contains("geometry") ? j["geometry"] : empty;
    take(g, "rows", c.geometry.rows);
    take(g, "cols", c.geometry.cols);
    take(g, "cells_per_cluster", c.geometry.cells_per_cluster);
    take(g, "slices", c.geometry.slices);
    take(g, "slice_pairs", c.geometry.slice_pairs);
    take(g, "clusters_per_slice", c.geometry.clusters_per_slice);
    const auto& a = j.contains("analog") ? j["analog"] : empty;
    take(a, "vdd", c.analog.vdd);
    take(a, "c_mom", c.analog.c_mom);
    take(a, "c_p", c.analog.c_p);
    take(a, "c_gs", c.analog.c_gs);
    take(a, "ci_channel_cap", c.analog.ci_channel_cap);
    take(a, "v_th", c.analog.v_th);
    take(a, "dac_step", c.analog.dac_step);
    take(a, "adc_lsb_pre", c.analog.adc_lsb_pre);
    const auto& v = j.contains("variation") ? j["variation"] : empty;
    take(v, "gain_sigma", c.variation.gain_sigma);
    take(v, "offset_sigma", c.variation.offset_sigma);
    take(v, "ci_mismatch_sigma", c.variation.ci_mismatch_sigma);
    take(v, "comparator_noise_sigma", c.variation.comparator_noise_sigma);
    take(v, "switching_error_sigma", c.variation.switching_error_sigma);
    if (j.contains("switching_error"))
      c.switching = j["switching_error"].get<bool>() ? SwitchingError::on : SwitchingError::off;
    const auto& s = j.contains("sweep") ? j["sweep"] : empty;
    take(s, "repeats", c.sweep.repeats);
    take(s, "step", c.sweep.step);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void SimConfig::validate() const {
  std::string msg;
  for (const auto& v : cimsim::validate(geometry, analog)) msg += "\n  " + v.field + ": " + v.message;
  const auto& s = variation;
  if (s.gain_sigma < 0 || s.offset_sigma < 0 || s.ci_mismatch_sigma < 0 || s.comparator_noise_sigma < 0 ||
      s.switching_error_sigma < 0)
    msg += "\n  variation: sigmas must be >= 0";
  if (sweep.repeats < 1 || sweep.step < 1) msg += "\n  sweep: repeats and step must be >= 1";
  if (!msg.empty()) throw Error(ErrorKind::input_domain, "invalid config:" + msg);
}

std::string SimConfig::hash() const {
  const auto text = to_j(*this).dump();
  return fmt::format("{:08x}", crc32_of(text.data(), text.size()));
}

SimConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return SimConfig::from_json(std::string(bytes.begin(), bytes.end()));
}

VariationProfile chip_profile(const SimConfig& cfg, uint64_t seed, int macro) {
  return sample_profile(cfg.variation, cfg.geometry, derive_seed(seed, 100 + static_cast<uint64_t>(macro)));
}

uint64_t calibration_seed(uint64_t seed, int macro) { return derive_seed(seed, 200 + static_cast<uint64_t>(macro)); }

}  // namespace cimsim
