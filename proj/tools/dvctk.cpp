// dvctk: volumetric DVC pipeline driver.
// Subcommands: synth | dvc | correct | strain | report

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dvc/correct.hpp"
#include "dvc/correlate.hpp"
#include "dvc/field_io.hpp"
#include "dvc/field_ops.hpp"
#include "dvc/parallel.hpp"
#include "dvc/residual.hpp"
#include "dvc/synth.hpp"
#include "dvc/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tracks everything a command writes; on failure removes partial output so
// exit code 0 means "all requested outputs exist".
class OutputSet {
 public:
  void note(const fs::path& p) { written_.push_back(p); }

  void discard_all() {
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> written_;
};

std::string read_text_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw dvc::ConfigError("cannot open file: " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const fs::path& p, const std::string& text, OutputSet& outs) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw dvc::IoError("cannot write: " + p.string());
  out << text;
  if (!out) throw dvc::IoError("write failed: " + p.string());
  outs.note(p);
}

json load_json(const fs::path& p) {
  try {
    return json::parse(read_text_file(p));
  } catch (const json::exception& e) {
    throw dvc::ConfigError("bad JSON in " + p.string() + ": " + e.what());
  }
}

std::vector<dvc::GrayInterval> intervals_from_json(const json& arr) {
  std::vector<dvc::GrayInterval> out;
  for (const auto& item : arr)
    out.push_back({item.at("lo").get<double>(), item.at("hi").get<double>(),
                   item.at("label").get<int>()});
  return out;
}

struct RunConfig {
  dvc::DvcParams params;
  std::optional<dvc::GridSpec> grid;
  dvc::CorrectionSettings correction;
  dvc::SegmentationSpec segmentation;
  int strain_window = 1;
  int bins = 16;
  bool has_segmentation = false;
};

RunConfig parse_config(const json& j) {
  RunConfig c;
  if (j.contains("params")) c.params = dvc::dvc_params_from_json(j["params"].dump());
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    dvc::GridSpec gs;
    gs.origin = {g.at("origin")[0].get<std::int64_t>(), g.at("origin")[1].get<std::int64_t>(),
                 g.at("origin")[2].get<std::int64_t>()};
    gs.step = g.at("step").get<std::int64_t>();
    gs.counts = {g.at("counts")[0].get<std::int64_t>(), g.at("counts")[1].get<std::int64_t>(),
                 g.at("counts")[2].get<std::int64_t>()};
    c.grid = gs;
  }
  if (j.contains("correction")) {
    const auto& k = j["correction"];
    c.correction.max_passes = k.value("max_passes", c.correction.max_passes);
    c.correction.min_gain = k.value("min_gain", c.correction.min_gain);
    c.correction.fill = k.value("fill", c.correction.fill);
    c.correction.outlier_eps0 = k.value("outlier_eps0", c.correction.outlier_eps0);
    c.correction.outlier_thresh = k.value("outlier_thresh", c.correction.outlier_thresh);
  }
  if (j.contains("segmentation")) {
    const auto& s = j["segmentation"];
    c.segmentation.ref_intervals = intervals_from_json(s.at("ref_intervals"));
    c.segmentation.def_intervals = s.contains("def_intervals")
                                       ? intervals_from_json(s["def_intervals"])
                                       : c.segmentation.ref_intervals;
    c.segmentation.component_a = s.value("component_a", 1);
    c.segmentation.component_b = s.value("component_b", 2);
    c.has_segmentation = true;
  }
  if (j.contains("strain_window")) c.strain_window = j["strain_window"].get<int>();
  if (j.contains("bins")) c.bins = j["bins"].get<int>();
  return c;
}

json params_echo_json(const dvc::DvcParams& p) {
  return json::parse(dvc::dvc_params_json(p));
}

json stats_json(const dvc::ResidualStats& s) {
  return json{{"mean_r", s.mean_r},
              {"mean_r_corrected", s.mean_corrected},
              {"mean_abs_r_corrected", s.mean_abs_corrected},
              {"voxel_count", s.count}};
}

json noise_json(const dvc::NoiseEstimate& n) {
  json comps = json::object();
  for (const auto& [k, v] : n.component_mean)
    comps[std::to_string(k)] = {{"mean", v}, {"count", n.component_count.at(k)}};
  return json{{"pooled", n.pooled}, {"pooled_count", n.pooled_count}, {"components", comps}};
}

json evaluation_json(const dvc::FieldEvaluation& ev) {
  return json{{"stats", stats_json(ev.stats)},
              {"noise", noise_json(ev.noise)},
              {"g1", ev.g1},
              {"g2", ev.g2},
              {"p", ev.p}};
}

void write_pgm(const fs::path& p, std::int64_t w, std::int64_t h,
               const std::vector<std::uint8_t>& pix, OutputSet& outs) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw dvc::IoError("cannot write: " + p.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pix.data()), std::int64_t(pix.size()));
  if (!out) throw dvc::IoError("write failed: " + p.string());
  outs.note(p);
}

struct SlicePlane {
  int axis = 0;  // 0=x, 1=y, 2=z
  std::int64_t index = 0;
};

SlicePlane parse_slice(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw dvc::ConfigError("slice must look like x:1000");
  const std::string ax = text.substr(0, colon);
  SlicePlane s;
  if (ax == "x") s.axis = 0;
  else if (ax == "y") s.axis = 1;
  else if (ax == "z") s.axis = 2;
  else throw dvc::ConfigError("slice axis must be x, y or z");
  s.index = std::stoll(text.substr(colon + 1));
  return s;
}

// Gray mapping: residual values clamp to [0,255]; zncc maps [-1,1] -> [0,255].
void write_residual_slice(const dvc::ResidualVolume& res, SlicePlane s, const fs::path& path,
                          OutputSet& outs) {
  const dvc::Vec3i d = res.dims;
  const std::int64_t n0 = s.axis == 0 ? d.y : d.x;
  const std::int64_t n1 = s.axis == 2 ? d.y : d.z;
  const std::int64_t hi = s.axis == 0 ? d.x : (s.axis == 1 ? d.y : d.z);
  if (s.index < 0 || s.index >= hi) throw dvc::ConfigError("slice index out of range");
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(n0 * n1));
  for (std::int64_t b = 0; b < n1; ++b)
    for (std::int64_t a = 0; a < n0; ++a) {
      std::int64_t x = 0, y = 0, z = 0;
      if (s.axis == 0) { x = s.index; y = a; z = b; }
      else if (s.axis == 1) { x = a; y = s.index; z = b; }
      else { x = a; y = b; z = s.index; }
      const double v = res.r[std::size_t((z * d.y + y) * d.x + x)];
      pix[std::size_t(b * n0 + a)] = std::uint8_t(std::clamp(v, 0.0, 255.0));
    }
  write_pgm(path, n0, n1, pix, outs);
}

void write_zncc_slice(const dvc::DisplacementField& field, SlicePlane s, const fs::path& path,
                      OutputSet& outs) {
  const dvc::GridSpec& g = field.grid;
  // nearest grid plane to the requested voxel plane
  const std::int64_t axis_origin = g.origin[s.axis];
  std::int64_t plane = (s.index - axis_origin + g.step / 2) / g.step;
  plane = std::clamp<std::int64_t>(plane, 0, g.counts[s.axis] - 1);
  const std::int64_t n0 = s.axis == 0 ? g.counts.y : g.counts.x;
  const std::int64_t n1 = s.axis == 2 ? g.counts.y : g.counts.z;
  std::vector<std::uint8_t> pix(static_cast<std::size_t>(n0 * n1));
  for (std::int64_t b = 0; b < n1; ++b)
    for (std::int64_t a = 0; a < n0; ++a) {
      std::int64_t ix = 0, iy = 0, iz = 0;
      if (s.axis == 0) { ix = plane; iy = a; iz = b; }
      else if (s.axis == 1) { ix = a; iy = plane; iz = b; }
      else { ix = a; iy = b; iz = plane; }
      const double v = field.zncc[std::size_t(g.index(ix, iy, iz))];
      pix[std::size_t(b * n0 + a)] =
          std::uint8_t(std::clamp(127.5 * (v + 1.0), 0.0, 255.0));
    }
  write_pgm(path, n0, n1, pix, outs);
}

json curve_row(const dvc::BinStat& b) {
  return json{{"lo", b.lo}, {"hi", b.hi}, {"mean_r_corrected", b.mean_r_corrected},
              {"p", b.p}, {"count", b.count}};
}

void write_curves_csv(const std::vector<dvc::BinStat>& bins, const fs::path& path,
                      OutputSet& outs) {
  std::string text = "bin_lo,bin_hi,mean_r_corrected,p,count\n";
  char buf[200];
  for (const auto& b : bins) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%lld\n", b.lo, b.hi,
                  b.mean_r_corrected, b.p, static_cast<long long>(b.count));
    text += buf;
  }
  write_text_file(path, text, outs);
}

json report_json(const dvc::AccuracyReport& rep) {
  json bins = json::array();
  for (const auto& b : rep.bins) bins.push_back(curve_row(b));
  return json{{"g1", rep.g1},     {"g2", rep.g2}, {"noise", noise_json(rep.noise)},
              {"stats", stats_json(rep.stats)},   {"p", rep.p},
              {"bins", bins}};
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string spec_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void run_synth(const SynthArgs& args, OutputSet& outs) {
  const json spec = load_json(args.spec_path);
  dvc::synth::SpeckleSpec speckle =
      dvc::synth::speckle_spec_from_json(spec.at("speckle").dump());
  if (args.seed) speckle.seed = *args.seed;
  const dvc::synth::AnalyticField field =
      dvc::synth::analytic_field_from_json(spec.at("field").dump());
  const double noise_std = spec.value("noise_std", 0.0);
  const std::uint64_t deform_seed = spec.value("deform_seed", std::uint64_t(1));
  std::map<int, double> drift;
  if (spec.contains("gray_drift"))
    for (const auto& [k, v] : spec["gray_drift"].items()) drift[std::stoi(k)] = v.get<double>();

  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  const auto pair = dvc::synth::generate_speckle(speckle);
  const dvc::Volume def =
      dvc::synth::deform_volume(pair.volume, field, noise_std, drift, pair.labels, deform_seed);

  dvc::save_volume(pair.volume, out / "ref.vol");
  outs.note(out / "ref.vol");
  outs.note(out / "ref.vol.json");
  dvc::save_volume(def, out / "def.vol");
  outs.note(out / "def.vol");
  outs.note(out / "def.vol.json");
  dvc::save_labels(pair.labels, out / "labels.vol");
  outs.note(out / "labels.vol");
  outs.note(out / "labels.vol.json");

  // ground-truth field samples on the fixture grid (or a default grid)
  dvc::GridSpec grid;
  if (spec.contains("grid")) {
    const auto& g = spec["grid"];
    grid.origin = {g.at("origin")[0].get<std::int64_t>(), g.at("origin")[1].get<std::int64_t>(),
                   g.at("origin")[2].get<std::int64_t>()};
    grid.step = g.at("step").get<std::int64_t>();
    grid.counts = {g.at("counts")[0].get<std::int64_t>(), g.at("counts")[1].get<std::int64_t>(),
                   g.at("counts")[2].get<std::int64_t>()};
  } else {
    dvc::DvcParams defaults;
    defaults.grid_step = 8;
    defaults.subvolume_half_size = 10;
    defaults.search_radius = 5;
    grid = dvc::make_grid(speckle.dims, defaults);
  }
  std::string truth = "ix,iy,iz,x,y,z,u,v,w\n";
  char buf[240];
  for (std::int64_t iz = 0; iz < grid.counts.z; ++iz)
    for (std::int64_t iy = 0; iy < grid.counts.y; ++iy)
      for (std::int64_t ix = 0; ix < grid.counts.x; ++ix) {
        const dvc::Vec3i p = grid.node(ix, iy, iz);
        const dvc::Vec3d u = field.displacement(dvc::to_vec3d(p));
        std::snprintf(buf, sizeof buf,
                      "%lld,%lld,%lld,%lld,%lld,%lld,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(ix), static_cast<long long>(iy),
                      static_cast<long long>(iz), static_cast<long long>(p.x),
                      static_cast<long long>(p.y), static_cast<long long>(p.z), u.x, u.y, u.z);
        truth += buf;
      }
  write_text_file(out / "truth.csv", truth, outs);

  json summary;
  summary["speckle"] = json::parse(dvc::synth::speckle_spec_json(speckle));
  summary["field"] = json::parse(dvc::synth::analytic_field_json(field));
  summary["noise_std"] = noise_std;
  summary["grid"] = {{"origin", {grid.origin.x, grid.origin.y, grid.origin.z}},
                     {"step", grid.step},
                     {"counts", {grid.counts.x, grid.counts.y, grid.counts.z}}};
  write_text_file(out / "fixture.json", summary.dump(2) + "\n", outs);
  std::cout << "synth: wrote " << speckle.dims.x << "x" << speckle.dims.y << "x" << speckle.dims.z
            << " pair + labels + truth to " << args.out_dir << "\n";
}

// ---- dvc ---------------------------------------------------------------------

struct DvcArgs {
  std::string ref_path, def_path, out_dir;
  std::string config_path;
  std::string predictor_path;
  std::vector<std::string> states;
  bool incremental = false;
};

void write_field_outputs(const dvc::DisplacementField& field, const dvc::DvcParams& params,
                         const fs::path& csv, OutputSet& outs) {
  dvc::save_field(field, csv, params);
  outs.note(csv);
  fs::path side = csv;
  side += ".json";
  outs.note(side);
}

void run_dvc_cmd(const DvcArgs& args, const RunConfig& cfg, OutputSet& outs) {
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  if (!args.states.empty()) {
    if (args.states.size() < 2) throw dvc::ConfigError("--states needs at least two volumes");
    if (!args.incremental)
      throw dvc::ConfigError("--states requires --incremental (Fig. 2 superposition strategy)");
    std::vector<dvc::DisplacementField> increments;
    std::optional<dvc::GridSpec> grid = cfg.grid;
    for (std::size_t k = 0; k + 1 < args.states.size(); ++k) {
      const dvc::Volume a = dvc::load_volume(args.states[k]);
      const dvc::Volume b = dvc::load_volume(args.states[k + 1]);
      if (!grid) grid = dvc::make_grid(a.dims(), cfg.params);
      dvc::DisplacementField inc = dvc::run_dvc(a, b, *grid, cfg.params, nullptr);
      char name[64];
      std::snprintf(name, sizeof name, "inc_%02zu_%02zu.csv", k + 1, k + 2);
      write_field_outputs(inc, cfg.params, out / name, outs);
      const auto flags =
          dvc::detect_outliers(inc, cfg.correction.outlier_eps0, cfg.correction.outlier_thresh);
      increments.push_back(dvc::repair_field(inc, flags));
      dvc::DisplacementField total = dvc::accumulate(increments);
      std::snprintf(name, sizeof name, "total_01_%02zu.csv", k + 2);
      write_field_outputs(total, cfg.params, out / name, outs);
    }
    std::cout << "dvc: wrote " << args.states.size() - 1 << " increments and totals to "
              << args.out_dir << "\n";
    return;
  }

  const dvc::Volume ref = dvc::load_volume(args.ref_path);
  const dvc::Volume def = dvc::load_volume(args.def_path);
  const dvc::GridSpec grid = cfg.grid ? *cfg.grid : dvc::make_grid(ref.dims(), cfg.params);

  std::optional<dvc::DenseField> predictor;
  if (!args.predictor_path.empty()) {
    dvc::DisplacementField pred = dvc::load_field(args.predictor_path);
    const auto flags =
        dvc::detect_outliers(pred, cfg.correction.outlier_eps0, cfg.correction.outlier_thresh);
    predictor = dvc::densify(dvc::repair_field(pred, flags));
  }

  const dvc::DisplacementField field =
      dvc::run_dvc(ref, def, grid, cfg.params, predictor ? &*predictor : nullptr);
  write_field_outputs(field, cfg.params, out / "field.csv", outs);
  std::cout << "dvc: wrote field (" << grid.counts.x << "x" << grid.counts.y << "x"
            << grid.counts.z << " nodes) to " << args.out_dir << "\n";
}

// ---- correct -----------------------------------------------------------------

struct CorrectArgs {
  std::string ref_path, def_path, field_path, out_dir, config_path;
  bool keep_intermediate = false;
};

void run_correct(const CorrectArgs& args, RunConfig cfg, OutputSet& outs) {
  if (!cfg.has_segmentation)
    throw dvc::ConfigError("correct needs a segmentation block in the config");
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  const dvc::Volume ref = dvc::load_volume(args.ref_path);
  const dvc::Volume def = dvc::load_volume(args.def_path);
  const dvc::DisplacementField field = dvc::load_field(args.field_path);
  if (const auto file_params = dvc::load_field_params(args.field_path)) cfg.params = *file_params;

  if (args.keep_intermediate) {
    cfg.correction.on_warped = [&](int pass, const dvc::WarpedVolume& w) {
      char name[64];
      std::snprintf(name, sizeof name, "gprime_pass%d.vol", pass);
      dvc::save_volume(w.vol, out / name);
      outs.note(out / name);
      fs::path side = out / name;
      side += ".json";
      outs.note(side);
    };
  }

  auto [corrected, report] =
      dvc::self_correct(ref, def, field, cfg.params, cfg.segmentation, cfg.correction);
  write_field_outputs(corrected, cfg.params, out / "corrected_field.csv", outs);

  json passes = json::array();
  for (const auto& p : report.passes) {
    passes.push_back(json{{"mean_abs_increment", p.mean_abs_increment},
                          {"before", stats_json(p.before)},
                          {"after", stats_json(p.after)},
                          {"p_before", p.p_before},
                          {"p_after", p.p_after},
                          {"low_correlation_before", p.low_correlation_before},
                          {"low_correlation_after", p.low_correlation_after}});
  }
  json rep;
  rep["passes"] = passes;
  rep["pass_count"] = report.passes.size();
  rep["best_pass"] = report.best_pass;
  rep["params_echo"] = params_echo_json(report.params_echo);
  write_text_file(out / "correction_report.json", rep.dump(2) + "\n", outs);
  std::cout << "correct: " << report.passes.size() << " pass(es), best " << report.best_pass
            << ", wrote corrected field to " << args.out_dir << "\n";
}

// ---- strain ------------------------------------------------------------------

struct StrainArgs {
  std::string field_path, out_dir;
  int window = 1;
  bool vtk = false;
};

void run_strain(const StrainArgs& args, OutputSet& outs) {
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);
  const dvc::DisplacementField field = dvc::load_field(args.field_path);
  const dvc::StrainField strain = dvc::strain_from_field(field, args.window);
  dvc::save_strain(strain, out / "strain.csv");
  outs.note(out / "strain.csv");
  if (args.vtk) {
    dvc::save_vtk_structured_points(field, strain, out / "field.vtk");
    outs.note(out / "field.vtk");
  }
  std::cout << "strain: wrote strain field to " << args.out_dir << "\n";
}

// ---- report ------------------------------------------------------------------

struct ReportArgs {
  std::string ref_path, def_path, out_dir, config_path;
  std::vector<std::string> field_paths;
  std::string slice;
  int bins = 0;  // 0 = take from config
};

void run_report(const ReportArgs& args, RunConfig cfg, OutputSet& outs) {
  if (!cfg.has_segmentation)
    throw dvc::ConfigError("report needs a segmentation block in the config");
  if (args.field_paths.empty() || args.field_paths.size() > 2)
    throw dvc::ConfigError("report takes one or two --field files");
  const int bins = args.bins > 0 ? args.bins : cfg.bins;
  fs::create_directories(args.out_dir);
  const fs::path out(args.out_dir);

  const dvc::Volume ref = dvc::load_volume(args.ref_path);
  const dvc::Volume def = dvc::load_volume(args.def_path);

  json top;
  std::vector<dvc::AccuracyReport> reports;
  for (std::size_t i = 0; i < args.field_paths.size(); ++i) {
    dvc::DisplacementField field = dvc::load_field(args.field_paths[i]);
    const auto flags =
        dvc::detect_outliers(field, cfg.correction.outlier_eps0, cfg.correction.outlier_thresh);
    field = dvc::repair_field(field, flags);
    const dvc::StrainField strain = dvc::strain_from_field(field, cfg.strain_window);
    const dvc::AccuracyReport rep = dvc::residual_report(ref, def, field, cfg.segmentation,
                                                         strain, bins, cfg.correction.fill);
    reports.push_back(rep);

    const char* tag = args.field_paths.size() == 1 ? "" : (i == 0 ? "_before" : "_after");
    write_curves_csv(rep.bins, out / ("curves" + std::string(tag) + ".csv"), outs);
    top[args.field_paths.size() == 1 ? "report" : (i == 0 ? "before" : "after")] =
        report_json(rep);

    if (!args.slice.empty()) {
      const SlicePlane plane = parse_slice(args.slice);
      const dvc::DenseField dense = dvc::densify(field);
      const dvc::WarpedVolume warped = dvc::warp_volume(ref, dense, cfg.correction.fill);
      const dvc::ResidualVolume res = dvc::gray_residual(warped.vol, def, warped.valid);
      write_residual_slice(res, plane,
                           out / ("residual" + std::string(tag) + ".pgm"), outs);
      write_zncc_slice(field, plane, out / ("zncc" + std::string(tag) + ".pgm"), outs);
    }
  }
  write_text_file(out / "accuracy.json", top.dump(2) + "\n", outs);
  std::cout << "report: wrote accuracy report (" << bins << " bins) to " << args.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dvctk: digital volume correlation with image-matching self-correction"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker pool size (0 = hardware); never changes results");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic fixture pair from a spec");
  synth->add_option("spec", synth_args.spec_path, "fixture spec JSON")->required();
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  std::uint64_t seed_opt = 0;
  auto* seed_flag = synth->add_option("--seed", seed_opt, "override the speckle seed");

  DvcArgs dvc_args;
  std::string dvc_config;
  int step_opt = 0, subvol_opt = 0, radius_opt = -1;
  auto* dvccmd = app.add_subcommand("dvc", "run grid DVC between two volumes");
  dvccmd->add_option("--ref", dvc_args.ref_path, "reference volume (.vol)");
  dvccmd->add_option("--def", dvc_args.def_path, "deformed volume (.vol)");
  dvccmd->add_option("--states", dvc_args.states, "ordered state volumes for incremental runs")
      ->delimiter(',');
  dvccmd->add_flag("--incremental", dvc_args.incremental,
                   "correlate adjacent states and accumulate totals");
  dvccmd->add_option("--predictor", dvc_args.predictor_path, "seed field CSV");
  dvccmd->add_option("--config", dvc_config, "run config JSON");
  dvccmd->add_option("--step", step_opt, "grid step in voxels (default 10)");
  dvccmd->add_option("--subvol", subvol_opt, "subvolume edge in voxels (default 141)");
  dvccmd->add_option("--search-radius", radius_opt, "integer search radius");
  dvccmd->add_option("--out", dvc_args.out_dir, "output directory")->required();

  CorrectArgs correct_args;
  auto* correct = app.add_subcommand("correct", "self-correct a displacement field");
  correct->add_option("--ref", correct_args.ref_path)->required();
  correct->add_option("--def", correct_args.def_path)->required();
  correct->add_option("--field", correct_args.field_path)->required();
  correct->add_option("--config", correct_args.config_path)->required();
  correct->add_option("--out", correct_args.out_dir)->required();
  correct->add_flag("--keep-intermediate", correct_args.keep_intermediate,
                    "save each pass's warped reference G'");

  StrainArgs strain_args;
  auto* strain = app.add_subcommand("strain", "compute the strain field of a displacement field");
  strain->add_option("--field", strain_args.field_path)->required();
  strain->add_option("--window", strain_args.window, "least-squares node radius (default 1)");
  strain->add_flag("--vtk", strain_args.vtk, "also write a legacy VTK structured-points file");
  strain->add_option("--out", strain_args.out_dir)->required();

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "gray-residual and accuracy-index report");
  report->add_option("--ref", report_args.ref_path)->required();
  report->add_option("--def", report_args.def_path)->required();
  report->add_option("--field", report_args.field_paths, "field CSV (one, or before+after)")
      ->required()
      ->expected(1, 2);
  report->add_option("--config", report_args.config_path)->required();
  report->add_option("--bins", report_args.bins, "equivalent-strain bins (default 16)");
  report->add_option("--slice", report_args.slice, "slice plane for PGM images, e.g. x:1000");
  report->add_option("--out", report_args.out_dir)->required();

  CLI11_PARSE(app, argc, argv);
  dvc::set_worker_count(threads);

  OutputSet outs;
  try {
    if (synth->parsed()) {
      if (*seed_flag) synth_args.seed = seed_opt;
      run_synth(synth_args, outs);
    } else if (dvccmd->parsed()) {
      RunConfig cfg;
      if (!dvc_config.empty()) cfg = parse_config(load_json(dvc_config));
      if (step_opt > 0) cfg.params.grid_step = step_opt;
      if (subvol_opt > 0) {
        if (subvol_opt % 2 == 0) throw dvc::ConfigError("--subvol must be odd");
        cfg.params.subvolume_half_size = (subvol_opt - 1) / 2;
      }
      if (radius_opt >= 0) cfg.params.search_radius = radius_opt;
      if (dvc_args.states.empty() && (dvc_args.ref_path.empty() || dvc_args.def_path.empty()))
        throw dvc::ConfigError("dvc needs --ref and --def (or --states)");
      run_dvc_cmd(dvc_args, cfg, outs);
    } else if (correct->parsed()) {
      run_correct(correct_args, parse_config(load_json(correct_args.config_path)), outs);
    } else if (strain->parsed()) {
      run_strain(strain_args, outs);
    } else if (report->parsed()) {
      run_report(report_args, parse_config(load_json(report_args.config_path)), outs);
    }
  } catch (const dvc::ConfigError& e) {
    outs.discard_all();
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dvc::IoError& e) {
    outs.discard_all();
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    outs.discard_all();
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
