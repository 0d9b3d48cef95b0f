#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctf3d/raster.hpp"

namespace ctf3d {

inline constexpr const char* kToolVersion = "0.1.0";

enum class TestMode { pointcloud, dsm, mesh };
const char* to_string(TestMode m);

/// Everything a run needs. Loaded from TOML; command-line flags override
/// individual fields afterwards.
struct PipelineConfig {
  // [paths]
  std::filesystem::path reference;  // LAS point cloud or GeoTIFF DSM
  std::filesystem::path test;
  TestMode test_mode = TestMode::dsm;
  /// "lidar" (polygonize the reference building mask), "osm", or a GeoJSON path.
  std::string footprints = "lidar";
  std::filesystem::path out_dir = "ctf3d_out";
  std::string crs;  // used for inputs that carry no CRS

  // [prepare]
  double gsd = 0.0;  // 0: average nominal point spacing of the reference cloud
  double conf_threshold = 0.5;

  // [align]
  int window_px = 512;
  double valid_frac = 0.95;
  std::optional<std::array<double, 3>> manual_offset;  // dx, dy, dz in meters

  // [footprints]
  double dp_epsilon = -1.0;  // negative: one cell
  double min_area = 25.0;
  int search_radius = 5;  // cells
  std::filesystem::path osm_cache;
  std::string osm_endpoint = "https://overpass-api.de/api/interpreter";

  // [regions]
  double angle_tol = 10.0;
  double max_orth_dist = 30.0;
  double max_centroid_dist = 150.0;
  double min_overlap = 2.0;

  // [ctf]
  double ref_ctf_min = 0.95;
  int min_samples = 5;
  double ctf_threshold = 0.2;

  // [report]
  bool log_x = false;

  /// Throws Error(config) naming the offending key.
  void validate() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& toml_text, const std::filesystem::path& base_dir = {});
std::string config_to_toml(const PipelineConfig& config);

/// Stages in execution order.
enum class Stage { prepare, align, footprints, regions, ctf, fit, report };
inline constexpr std::array<Stage, 7> kAllStages{Stage::prepare, Stage::align,  Stage::footprints, Stage::regions,
                                                 Stage::ctf,     Stage::fit,    Stage::report};
const char* to_string(Stage s);

/// Output file names inside out_dir.
namespace artifacts {
inline constexpr const char* reference_dsm = "reference_dsm.tif";
inline constexpr const char* reference_dtm = "reference_dtm.tif";
inline constexpr const char* building_mask = "building_mask.tif";
inline constexpr const char* ground_mask = "ground_mask.tif";
inline constexpr const char* aligned_test = "test_aligned.tif";
inline constexpr const char* alignment = "alignment.json";
inline constexpr const char* footprints = "footprints.geojson";
inline constexpr const char* regions = "regions.geojson";
inline constexpr const char* records_geojson = "ctf_records.geojson";
inline constexpr const char* records_csv = "ctf_records.csv";
inline constexpr const char* accuracy = "vertical_accuracy.json";
inline constexpr const char* fit = "ctf_fit.json";
inline constexpr const char* plot = "ctf_plot.svg";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* lock = ".ctf3d.lock";
}  // namespace artifacts

struct StageResult {
  Stage stage;
  bool skipped = false;  // outputs were current
  std::map<std::string, std::string> outputs;  // file name -> sha256
};

/// Runs stages against one output directory. Holds the directory's lock
/// file for its lifetime and rewrites manifest.json after every stage.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  StageResult run_stage(Stage stage);
  std::vector<StageResult> run_all();

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path out(const char* name) const { return config_.out_dir / name; }

 private:
  struct StageRecord {
    std::string key;
    std::map<std::string, std::string> outputs;
    std::string finished;
  };

  std::string stage_key(Stage stage, const std::vector<std::filesystem::path>& inputs) const;
  bool outputs_current(const StageRecord& rec) const;
  void load_manifest();
  void write_manifest() const;
  std::vector<std::string> execute(Stage stage);

  PipelineConfig config_;
  std::filesystem::path lock_path_;
  std::map<std::string, StageRecord> stages_;
  std::string created_;
};

/// Maps an exception to the documented process exit code:
/// 2 bad configuration, 3 missing stage input, 4 numerical failure, 1 other.
int exit_code_for(const std::exception& e);

struct TribarOutputs {
  std::vector<std::filesystem::path> rasters;  // full resolution first, then x2, x4, ...
  std::filesystem::path footprints;
};

/// The standard resolution target: 0.25 m cells, bar widths and gaps growing
/// geometrically from 0.3 m to about 8 m over 36 groups.
TribarParams standard_tribar_params();

/// Writes the tribar DSM, its `levels` successive 2x downsamplings and the
/// exact bar footprints.
TribarOutputs write_tribar_fixture(const TribarParams& params, int levels, const std::filesystem::path& dir);

}  // namespace ctf3d
