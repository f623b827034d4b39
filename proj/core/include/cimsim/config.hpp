#pragma once

#include "cimsim/analog_core.hpp"
#include "cimsim/characterization.hpp"
#include "cimsim/macro_config.hpp"
#include "cimsim/variation.hpp"

#include <filesystem>
#include <string>

namespace cimsim {

// Everything that changes simulated numbers. Unset fields keep defaults.
struct SimConfig {
  MacroGeometry geometry;
  AnalogParams analog;
  VariationSpec variation;
  SwitchingError switching = SwitchingError::off;
  SweepOptions sweep;

  std::string to_json() const;
  static SimConfig from_json(std::string_view text);
  // Throws ErrorKind::input_domain listing every invalid field.
  void validate() const;
  // CRC32 of the canonical JSON, 8 hex digits.
  std::string hash() const;
};

SimConfig load_config(const std::filesystem::path& path);

// Chip `macro` of a run seeded with `seed`, and the seed of its calibration
// sweep. Inference and the characterization commands share these streams.
VariationProfile chip_profile(const SimConfig& cfg, uint64_t seed, int macro = 0);
uint64_t calibration_seed(uint64_t seed, int macro = 0);

}  // namespace cimsim
