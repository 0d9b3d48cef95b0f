// ctf3d: staged CTF resolution evaluation of 3D products against reference lidar.

#include <omp.h>

#include <cstdio>
#include <fmt/format.h>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"
#include "ctf3d/pipeline.hpp"

using namespace ctf3d;

namespace {

// Values given on the command line; each one, when set, wins over the config file.
struct Overrides {
  std::optional<std::string> reference, test, test_mode, footprints, out_dir, crs, osm_cache, osm_endpoint;
  std::optional<double> gsd, conf_threshold, valid_frac, dp_epsilon, min_area, angle_tol, max_orth_dist,
      max_centroid_dist, min_overlap, ref_ctf_min, threshold;
  std::optional<int> window_px, search_radius, min_samples;
  std::optional<std::vector<double>> manual_offset;
  bool log_x = false;

  void apply(PipelineConfig& c) const {
    auto set = [](auto& dst, const auto& src) {
      if (src) dst = *src;
    };
    set(c.reference, reference);
    set(c.test, test);
    set(c.footprints, footprints);
    set(c.out_dir, out_dir);
    set(c.crs, crs);
    set(c.osm_cache, osm_cache);
    set(c.osm_endpoint, osm_endpoint);
    set(c.gsd, gsd);
    set(c.conf_threshold, conf_threshold);
    set(c.valid_frac, valid_frac);
    set(c.dp_epsilon, dp_epsilon);
    set(c.min_area, min_area);
    set(c.angle_tol, angle_tol);
    set(c.max_orth_dist, max_orth_dist);
    set(c.max_centroid_dist, max_centroid_dist);
    set(c.min_overlap, min_overlap);
    set(c.ref_ctf_min, ref_ctf_min);
    set(c.ctf_threshold, threshold);
    set(c.window_px, window_px);
    set(c.search_radius, search_radius);
    set(c.min_samples, min_samples);
    if (test_mode) {
      if (*test_mode == "pointcloud") {
        c.test_mode = TestMode::pointcloud;
      } else if (*test_mode == "dsm") {
        c.test_mode = TestMode::dsm;
      } else if (*test_mode == "mesh") {
        c.test_mode = TestMode::mesh;
      } else {
        throw Error(ErrorKind::config, "--test-mode must be pointcloud, dsm or mesh");
      }
    }
    if (manual_offset) {
      if (manual_offset->size() != 3) throw Error(ErrorKind::config, "--manual-offset takes dx,dy,dz");
      c.manual_offset = std::array<double, 3>{(*manual_offset)[0], (*manual_offset)[1], (*manual_offset)[2]};
    }
    if (log_x) c.log_x = true;
  }
};

void add_pipeline_options(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--reference", o.reference, "Reference LAS point cloud or GeoTIFF DSM");
  cmd.add_option("--test", o.test, "Test product (point cloud, DSM or OBJ mesh)");
  cmd.add_option("--test-mode", o.test_mode, "pointcloud | dsm | mesh");
  cmd.add_option("--footprints", o.footprints, "lidar | osm | path to a GeoJSON file");
  cmd.add_option("--crs", o.crs, "CRS for inputs that carry none (e.g. EPSG:32611)");
  cmd.add_option("--gsd", o.gsd, "Raster cell size in meters (default: reference point spacing)");
  cmd.add_option("--conf-threshold", o.conf_threshold, "Minimum label confidence for mask cells");
  cmd.add_option("--window-px", o.window_px, "Alignment window size in cells");
  cmd.add_option("--valid-frac", o.valid_frac, "Minimum valid fraction for an alignment window");
  cmd.add_option("--manual-offset", o.manual_offset, "dx,dy,dz in meters; skips offset estimation")->delimiter(',');
  cmd.add_option("--dp-epsilon", o.dp_epsilon, "Footprint simplification tolerance in meters (<0: one cell)");
  cmd.add_option("--min-area", o.min_area, "Smallest footprint kept, square meters");
  cmd.add_option("--search-radius", o.search_radius, "Footprint alignment search radius in cells");
  cmd.add_option("--osm-cache", o.osm_cache, "Directory for cached Overpass responses");
  cmd.add_option("--osm-endpoint", o.osm_endpoint, "Overpass API endpoint");
  cmd.add_option("--angle-tol", o.angle_tol, "Parallel-edge tolerance in degrees");
  cmd.add_option("--max-orth-dist", o.max_orth_dist, "Largest building separation in meters");
  cmd.add_option("--max-centroid-dist", o.max_centroid_dist, "Largest centroid distance for a building pair");
  cmd.add_option("--min-overlap", o.min_overlap, "Smallest edge overlap in meters");
  cmd.add_option("--ref-ctf-min", o.ref_ctf_min, "Records with reference contrast at or below this are dropped");
  cmd.add_option("--min-samples", o.min_samples, "Fewest valid cells per rectangle");
  cmd.add_option("--threshold", o.threshold, "Contrast level that defines the resolution distance");
  cmd.add_flag("--log-x", o.log_x, "Logarithmic distance axis in the plot");
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Contrast-transfer resolution evaluation of 3D products against reference lidar"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  int threads = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--threads", threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.fallthrough();

  Overrides o;
  std::vector<std::pair<CLI::App*, std::optional<Stage>>> stage_cmds;
  const std::map<Stage, const char*> help{
      {Stage::prepare, "Build the reference DSM, DTM and classification masks"},
      {Stage::align, "Rasterize the test product and register it to the reference"},
      {Stage::footprints, "Produce building footprints (lidar, OSM or file)"},
      {Stage::regions, "Find evaluation regions between parallel building edges"},
      {Stage::ctf, "Compute contrast per region and vertical accuracy"},
      {Stage::fit, "Fit the contrast model and the threshold distance"},
      {Stage::report, "Write the plot and the JSON summary"}};
  for (Stage s : kAllStages) {
    CLI::App* cmd = app.add_subcommand(to_string(s), help.at(s));
    add_pipeline_options(*cmd, o);
    stage_cmds.emplace_back(cmd, s);
  }
  CLI::App* run_cmd = app.add_subcommand("run", "Run every stage in order, reusing current outputs");
  add_pipeline_options(*run_cmd, o);
  stage_cmds.emplace_back(run_cmd, std::nullopt);

  TribarParams tp = standard_tribar_params();
  int levels = 4;
  CLI::App* synth = app.add_subcommand("synth-tribar", "Write the tribar DSM, its downsampled variants and footprints");
  synth->add_option("--levels", levels, "Number of 2x downsamplings")->capture_default_str()->check(CLI::Range(0, 10));
  synth->add_option("--cell", tp.gsd, "Cell size of the full-resolution DSM")->capture_default_str();
  synth->add_option("--bar-width", tp.bar_width, "Bar width of the first group")->capture_default_str();
  synth->add_option("--gap", tp.gap, "Gap of the first group")->capture_default_str();
  synth->add_option("--gap-scale", tp.gap_scale, "Per-group gap growth")->capture_default_str();
  synth->add_option("--bar-scale", tp.bar_scale, "Per-group bar width growth")->capture_default_str();
  synth->add_option("--groups", tp.n_groups, "Number of bar groups")->capture_default_str();
  synth->add_option("--bar-height", tp.bar_height, "Bar height in meters")->capture_default_str();
  synth->add_option("--crs", tp.crs, "CRS of the fixture")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  log::set_level(verbose ? log::Level::debug : log::Level::info);
  if (threads > 0) omp_set_num_threads(threads);

  if (synth->parsed()) {
    const std::filesystem::path dir = out_dir.value_or("tribar");
    const TribarOutputs fx = write_tribar_fixture(tp, levels, dir);
    for (const auto& r : fx.rasters) std::cout << r.string() << '\n';
    std::cout << fx.footprints.string() << '\n';
    return 0;
  }

  PipelineConfig config = config_path.empty() ? PipelineConfig{} : load_config(config_path);
  if (out_dir) o.out_dir = out_dir;
  o.apply(config);

  Pipeline pipeline(config);
  for (const auto& [cmd, stage] : stage_cmds) {
    if (!cmd->parsed()) continue;
    std::vector<StageResult> results;
    if (stage) {
      results.push_back(pipeline.run_stage(*stage));
    } else {
      results = pipeline.run_all();
    }
    for (const auto& r : results) {
      std::cout << fmt::format("{:<10} {}\n", to_string(r.stage), r.skipped ? "up to date" : "done");
      for (const auto& [file, hash] : r.outputs) {
        std::cout << fmt::format("  {}  {}\n", hash.substr(0, 12), (config.out_dir / file).string());
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
