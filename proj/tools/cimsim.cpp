// cimsim: mapping, inference and characterization reports for the macro model.
#include "cimsim/characterization.hpp"
#include "cimsim/config.hpp"
#include "cimsim/inference.hpp"
#include "cimsim/mapping.hpp"
#include "cimsim/network.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cimsim;

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, invariant_error = 3 };

struct Global {
  std::string config;
  std::string out = ".";
  std::string format = "csv";
  SimConfig cfg;
  bool json() const { return format == "json"; }
};

void write_file(const Global& gl, const std::string& name, const std::string& text) {
  fs::create_directories(gl.out);
  const auto path = fs::path(gl.out) / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::data, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::data, "write failed: " + path.string());
  std::cout << "wrote " << path.string() << "\n";
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.6g}", v);
}

json provenance(const Global& gl, std::optional<uint64_t> seed) {
  json j{{"config_hash", gl.cfg.hash()}};
  if (seed) j["seed"] = *seed;
  return j;
}

// Network from a manifest, or one of the built-in topologies (shapes only).
std::vector<LayerSpec> network_specs(const std::string& model, const std::string& topology) {
  if (!model.empty()) return load_model(model).specs();
  if (topology == "lenet5") return lenet5_topology();
  if (topology == "resnet20") return resnet20_topology();
  throw Error(ErrorKind::input_domain, "unknown topology '" + topology + "' (lenet5|resnet20)");
}

MacroSimulator make_chip(const Global& gl, bool ideal, uint64_t seed) {
  const auto& g = gl.cfg.geometry;
  return MacroSimulator(g, gl.cfg.analog, ideal ? VariationProfile::ideal(g) : chip_profile(gl.cfg, seed),
                        gl.cfg.switching);
}

// ---- map / report ----------------------------------------------------------

int cmd_map(const Global& gl, const std::string& model, const std::string& topology) {
  const auto m = map_network(network_specs(model, topology), gl.cfg.geometry);
  if (gl.json()) {
    write_file(gl, "mapping.json", mapping_manifest_json(m, gl.cfg.geometry));
  } else {
    std::string csv = "layer,first_macro,macros_needed,start_row,rows_total,occupied_rows_per_slice,slices,planes,"
                      "chunks_per_filter,conversions_per_position\n";
    for (const auto& L : m.layers)
      csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", L.spec.name, L.first_macro, L.macros_needed, L.start_row,
                         L.rows_total, L.occupied_rows_per_slice, L.slices_used().size(), L.planes,
                         L.chunks_per_filter, L.conversions_per_position);
    write_file(gl, "mapping.csv", csv);
  }
  std::cout << m.layers.size() << " layers on " << m.macros << " macro(s)\n";
  return ok;
}

int cmd_report(const Global& gl, const std::string& model, const std::string& topology) {
  const auto m = map_network(network_specs(model, topology), gl.cfg.geometry);
  const auto sch = schedule(m);
  const auto st = storage_report(m, gl.cfg.geometry);
  if (gl.json()) {
    json layers = json::array();
    for (size_t i = 0; i < sch.layers.size(); ++i) {
      const auto& e = sch.layers[i];
      layers.push_back({{"name", e.name}, {"occupied_rows_per_slice", m.layers[i].occupied_rows_per_slice},
                        {"macros_needed", m.layers[i].macros_needed}, {"positions", e.positions},
                        {"conversions_per_position", e.conversions_per_position},
                        {"cycles_per_pass", e.cycles_per_pass}, {"nibble_passes", e.nibble_passes},
                        {"mac_cycles", e.mac_cycles}});
    }
    json j{{"layers", layers},
           {"total_cycles_per_pass", sch.total_cycles_per_pass},
           {"total_mac_cycles", sch.total_mac_cycles},
           {"storage",
            {{"macros", st.macros}, {"cluster_rows_used", st.cluster_rows_used},
             {"cluster_rows_total", st.cluster_rows_total}, {"cells_used", st.cells_used},
             {"utilization_percent", st.utilization}}},
           {"provenance", provenance(gl, std::nullopt)}};
    write_file(gl, "report.json", j.dump(2) + "\n");
  } else {
    std::string cyc = "layer,occupied_rows_per_slice,macros_needed,positions,conversions_per_position,cycles_per_pass,"
                      "nibble_passes,mac_cycles\n";
    for (size_t i = 0; i < sch.layers.size(); ++i) {
      const auto& e = sch.layers[i];
      cyc += fmt::format("{},{},{},{},{},{},{},{}\n", e.name, m.layers[i].occupied_rows_per_slice,
                         m.layers[i].macros_needed, e.positions, e.conversions_per_position, e.cycles_per_pass,
                         e.nibble_passes, e.mac_cycles);
    }
    cyc += fmt::format("total,,,,,{},,{}\n", sch.total_cycles_per_pass, sch.total_mac_cycles);
    write_file(gl, "cycles.csv", cyc);
    write_file(gl, "storage.csv",
               fmt::format("macros,cluster_rows_used,cluster_rows_total,cells_used,utilization_percent\n{},{},{},{},{}\n",
                           st.macros, st.cluster_rows_used, st.cluster_rows_total, st.cells_used,
                           fmt_double(st.utilization)));
  }
  for (const auto& e : sch.layers) std::cout << fmt::format("{:<12} {:>10} cycles\n", e.name, e.mac_cycles);
  std::cout << fmt::format("utilization {:.2f}% over {} macro(s)\n", st.utilization, st.macros);
  return ok;
}

// ---- run -------------------------------------------------------------------

struct RunArgs {
  std::string model, images, labels, mode = "ideal", calib = "two-step";
  uint64_t seed = 0;
  int limit = 0, threads = 0;
};

int cmd_run(const Global& gl, const RunArgs& a) {
  const auto net = load_model(a.model);
  const auto images = load_images(a.images);
  const auto labels = load_labels(a.labels);
  RunOptions opt;
  opt.mode = run_mode_from_string(a.mode);
  opt.seed = a.seed;
  opt.calib = calibration_mode_from_string(a.calib);
  opt.limit = a.limit;
  opt.threads = a.threads;
  const auto r = run_inference(net, images, labels, gl.cfg, opt);
  if (gl.json())
    write_file(gl, "run.json", r.to_json() + "\n");
  else
    write_file(gl, "predictions.csv", r.predictions_csv());
  std::cout << fmt::format("{} {} calib={} seed={}: {}/{} correct, accuracy {:.4f}\n", r.model, to_string(r.mode),
                           to_string(r.calib), r.seed, r.correct, r.predictions.size(), r.accuracy);
  return ok;
}

// ---- characterization ------------------------------------------------------

int cmd_sweep(const Global& gl, uint64_t seed, bool ideal) {
  const auto sim = make_chip(gl, ideal, seed);
  const auto c = characterize(sim, gl.cfg.sweep, calibration_seed(seed));
  const auto inl_lin = inl_profile(c.slice_sweeps, c.table, CalibrationMode::linear);
  const auto inl_two = inl_profile(c.slice_sweeps, c.table, CalibrationMode::two_step);

  auto calibrated = [&](const Sweep& s, double raw, CalibrationMode m) {
    return s.mode == AdcMode::single ? c.table.apply_single(s.index, raw, m)
                                     : c.table.apply_differential(s.index, raw, m);
  };
  if (gl.json()) {
    json sweeps = json::array();
    for (const auto* group : {&c.slice_sweeps, &c.pair_sweeps})
      for (const auto& s : *group) {
        json pts = json::array();
        for (const auto& p : s.points)
          pts.push_back({p.pre, p.ideal_code, p.raw_mean, calibrated(s, p.raw_mean, CalibrationMode::linear),
                         calibrated(s, p.raw_mean, CalibrationMode::two_step), p.saturated});
        sweeps.push_back({{"mode", to_string(s.mode)}, {"index", s.index},
                          {"columns", {"pre", "ideal", "raw", "linear", "two_step", "saturated"}},
                          {"points", pts}});
      }
    json j{{"sweeps", sweeps},
           {"max_abs_inl", {{"linear", inl_lin.max_abs}, {"two_step", inl_two.max_abs}}},
           {"provenance", provenance(gl, seed)}};
    write_file(gl, "linearity.json", j.dump() + "\n");
  } else {
    // Leading columns follow the calibration report layout; pair sweeps go
    // to their own file with the pair index in the id column.
    const char* header = "ideal_code,raw_code,calibrated_code,slice_id,pre_adc,linear_code,saturated\n";
    std::string single = header, diff = header;
    for (const auto* group : {&c.slice_sweeps, &c.pair_sweeps})
      for (const auto& s : *group)
        for (const auto& p : s.points)
          (s.mode == AdcMode::single ? single : diff) +=
              fmt::format("{},{},{},{},{},{},{}\n", p.ideal_code, fmt_double(p.raw_mean),
                          fmt_double(calibrated(s, p.raw_mean, CalibrationMode::two_step)), s.index, p.pre,
                          fmt_double(calibrated(s, p.raw_mean, CalibrationMode::linear)), p.saturated ? 1 : 0);
    write_file(gl, "linearity.csv", single);
    write_file(gl, "linearity_differential.csv", diff);
    std::string inl = "slice,max_abs_inl_linear,max_abs_inl_two_step\n";
    for (size_t i = 0; i < inl_lin.max_abs_per_slice.size(); ++i)
      inl += fmt::format("{},{},{}\n", i, fmt_double(inl_lin.max_abs_per_slice[i]),
                         fmt_double(inl_two.max_abs_per_slice[i]));
    write_file(gl, "inl.csv", inl);
  }
  std::cout << fmt::format("max |INL|: linear {:.3f} LSB, two-step {:.3f} LSB\n", inl_lin.max_abs, inl_two.max_abs);
  return ok;
}

int cmd_error_hist(const Global& gl, uint64_t seed, double scale, bool samples) {
  if (!(scale > 0.0) || scale > 1.0) throw Error(ErrorKind::input_domain, "--scale must be in (0, 1]");
  const auto sim = make_chip(gl, false, seed);
  const auto table = characterize(sim, gl.cfg.sweep, calibration_seed(seed)).table;
  ErrorProtocol proto;
  proto.repeats = std::max(1, static_cast<int>(std::lround(proto.repeats * scale)));
  proto.keep_samples = samples;
  const auto h = error_histogram(sim, table, proto, derive_seed(seed, 400));

  const ErrorStats* all[] = {&h.raw, &h.linear, &h.two_step};
  if (gl.json()) {
    auto stats = [](const ErrorStats& s) {
      json hist = json::object();
      for (const auto& [e, n] : s.histogram) hist[std::to_string(e)] = n;
      return json{{"samples", s.samples}, {"mean", s.mean}, {"sigma", s.sigma}, {"histogram", hist}};
    };
    json j{{"protocol", {{"sets", proto.sets}, {"patterns", proto.patterns}, {"adcs", proto.adcs},
                         {"repeats", proto.repeats}}},
           {"raw", stats(h.raw)}, {"linear", stats(h.linear)}, {"two_step", stats(h.two_step)},
           {"provenance", provenance(gl, seed)}};
    write_file(gl, "error_hist.json", j.dump(2) + "\n");
  } else {
    int lo = 0, hi = 0;
    for (const auto* s : all)
      if (!s->histogram.empty()) {
        lo = std::min(lo, s->histogram.begin()->first);
        hi = std::max(hi, s->histogram.rbegin()->first);
      }
    auto count = [](const ErrorStats& s, int e) {
      const auto it = s.histogram.find(e);
      return it == s.histogram.end() ? 0L : it->second;
    };
    std::string csv = "error_lsb,raw,linear,two_step\n";
    for (int e = lo; e <= hi; ++e)
      csv += fmt::format("{},{},{},{}\n", e, count(h.raw, e), count(h.linear, e), count(h.two_step, e));
    write_file(gl, "error_hist.csv", csv);
    if (samples) {
      std::string rows = "ideal_code,raw_code,calibrated_code,slice_id,two_step_code\n";
      for (const auto& x : h.samples)
        rows += fmt::format("{},{},{},{},{}\n", x.ideal, x.raw, x.linear, x.slice, x.two_step);
      write_file(gl, "error_samples.csv", rows);
    }
    write_file(gl, "error_stats.csv",
               fmt::format("calibration,samples,mean,sigma\nnone,{},{},{}\nlinear,{},{},{}\ntwo-step,{},{},{}\n",
                           h.raw.samples, fmt_double(h.raw.mean), fmt_double(h.raw.sigma), h.linear.samples,
                           fmt_double(h.linear.mean), fmt_double(h.linear.sigma), h.two_step.samples,
                           fmt_double(h.two_step.mean), fmt_double(h.two_step.sigma)));
  }
  std::cout << fmt::format("sigma: raw {:.3f}, linear {:.3f}, two-step {:.3f} LSB ({} samples each)\n", h.raw.sigma,
                           h.linear.sigma, h.two_step.sigma, h.raw.samples);
  return ok;
}

int cmd_rms(const Global& gl, uint64_t seed, int slice, int runs, int step) {
  if (runs < 2 || step < 1) throw Error(ErrorKind::input_domain, "--runs must be >= 2 and --step >= 1");
  const auto sim = make_chip(gl, false, seed);
  if (slice < 0 || slice >= gl.cfg.geometry.slices) throw Error(ErrorKind::input_domain, "--slice out of range");
  const auto pts = rms_profile(sim, slice, runs, step, derive_seed(seed, 500));
  const double avg = average_rms(pts);
  if (gl.json()) {
    json p = json::array();
    for (const auto& x : pts) p.push_back({{"pre", x.pre}, {"rms", x.rms}, {"saturated", x.saturated}});
    json j{{"slice", slice}, {"runs", runs}, {"points", p}, {"average_rms", avg}, {"provenance", provenance(gl, seed)}};
    write_file(gl, "rms.json", j.dump(2) + "\n");
  } else {
    std::string csv = "pre,rms_lsb,saturated\n";
    for (const auto& x : pts) csv += fmt::format("{},{},{}\n", x.pre, fmt_double(x.rms), x.saturated ? 1 : 0);
    write_file(gl, "rms.csv", csv);
  }
  std::cout << fmt::format("average rms {:.4f} LSB over {} points\n", avg, pts.size());
  return ok;
}

int cmd_calibrate(const Global& gl, uint64_t seed) {
  const auto sim = make_chip(gl, false, seed);
  const auto table = characterize(sim, gl.cfg.sweep, calibration_seed(seed)).table;
  write_file(gl, "calibration.json", table.to_json() + "\n");
  double worst_k = 0, worst_b = 0;
  for (const auto& f : table.slices) {
    worst_k = std::max(worst_k, std::abs(f.k - 1.0));
    worst_b = std::max(worst_b, std::abs(f.b));
  }
  std::cout << fmt::format("{} slice fits, {} pair fits; max |k-1| {:.4f}, max |b| {:.3f} LSB\n", table.slices.size(),
                           table.pairs.size(), worst_k, worst_b);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cimsim: charge-domain SRAM compute macro simulator"};
  app.require_subcommand(1);
  app.fallthrough();
  Global gl;
  app.add_option("--config", gl.config, "JSON config overriding defaults")->check(CLI::ExistingFile);
  app.add_option("--out", gl.out, "output directory");
  app.add_option("--format", gl.format, "report format")->check(CLI::IsMember({"csv", "json"}));

  std::string model, topology = "lenet5";
  auto* map = app.add_subcommand("map", "model -> mapping manifest");
  map->add_option("--model", model, "model manifest");
  map->add_option("--topology", topology, "built-in topology when no model is given (lenet5|resnet20)");

  auto* report = app.add_subcommand("report", "cycle and storage tables");
  report->add_option("--model", model, "model manifest");
  report->add_option("--topology", topology, "built-in topology when no model is given (lenet5|resnet20)");

  RunArgs ra;
  auto* run = app.add_subcommand("run", "inference over an IDX image set");
  run->add_option("--model", ra.model, "model manifest")->required();
  run->add_option("--images", ra.images, "IDX images")->required();
  run->add_option("--labels", ra.labels, "IDX labels")->required();
  run->add_option("--mode", ra.mode, "pass-through|ideal|variation");
  run->add_option("--seed", ra.seed, "variation seed");
  run->add_option("--calib", ra.calib, "none|linear|two-step");
  run->add_option("--limit", ra.limit, "first N images (0 = all)");
  run->add_option("--threads", ra.threads, "worker threads (0 = all cores)");

  uint64_t seed = 1;
  bool ideal = false;
  auto* sweep = app.add_subcommand("sweep-linearity", "transfer curves and INL of every slice and pair");
  sweep->add_option("--seed", seed, "chip seed");
  sweep->add_flag("--ideal", ideal, "ideal chip instead of a sampled one");

  double scale = 1.0;
  bool samples = false;
  auto* hist = app.add_subcommand("error-hist", "paired error histogram: raw, linear, two-step");
  hist->add_option("--seed", seed, "chip seed");
  hist->add_option("--scale", scale, "fraction of the repeats per conversion");
  hist->add_flag("--samples", samples, "also write every scored conversion (csv)");

  int slice = 0, runs = 128, step = 1;
  auto* rms = app.add_subcommand("rms", "output noise over the input range");
  rms->add_option("--seed", seed, "chip seed");
  rms->add_option("--slice", slice, "slice");
  rms->add_option("--runs", runs, "conversions per point");
  rms->add_option("--step", step, "pre-ADC stride");

  auto* calib = app.add_subcommand("calibrate", "characterize a chip and save its calibration table");
  calib->add_option("--seed", seed, "chip seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : usage;
  }

  try {
    if (!gl.config.empty()) gl.cfg = load_config(gl.config);
    if (map->parsed()) return cmd_map(gl, model, topology);
    if (report->parsed()) return cmd_report(gl, model, topology);
    if (run->parsed()) return cmd_run(gl, ra);
    if (sweep->parsed()) return cmd_sweep(gl, seed, ideal);
    if (hist->parsed()) return cmd_error_hist(gl, seed, scale, samples);
    if (rms->parsed()) return cmd_rms(gl, seed, slice, runs, step);
    if (calib->parsed()) return cmd_calibrate(gl, seed);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::invariant: return invariant_error;
      case ErrorKind::input_domain:
      case ErrorKind::unsupported: return usage;
      default: return data_error;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return data_error;
  }
  return usage;
}
