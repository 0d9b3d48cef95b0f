#include "ctf3d/pipeline.hpp"

#include <fcntl.h>
#include <fmt/format.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "ctf3d/alignment.hpp"
#include "ctf3d/crs.hpp"
#include "ctf3d/ctf.hpp"
#include "ctf3d/error.hpp"
#include "ctf3d/footprints.hpp"
#include "ctf3d/geojson.hpp"
#include "ctf3d/geotiff.hpp"
#include "ctf3d/hash.hpp"
#include "ctf3d/log.hpp"
#include "ctf3d/osm.hpp"
#include "ctf3d/pointcloud.hpp"
#include "ctf3d/regions.hpp"
#include "toml.hpp"

namespace ctf3d {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(TestMode m) {
  switch (m) {
    case TestMode::pointcloud: return "pointcloud";
    case TestMode::dsm: return "dsm";
    case TestMode::mesh: return "mesh";
  }
  return "?";
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::prepare: return "prepare";
    case Stage::align: return "align";
    case Stage::footprints: return "footprints";
    case Stage::regions: return "regions";
    case Stage::ctf: return "ctf";
    case Stage::fit: return "fit";
    case Stage::report: return "report";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorKind::config, "config: " + msg); }

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) bad_config(fmt::format("{} {}", key, what));
}

bool is_raster_path(const fs::path& p) {
  auto ext = p.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".tif" || ext == ".tiff";
}

}  // namespace

void PipelineConfig::validate() const {
  require(!reference.empty(), "paths.reference", "must be set");
  require(!test.empty(), "paths.test", "must be set");
  require(!out_dir.empty(), "paths.out_dir", "must be set");
  require(!footprints.empty(), "paths.footprints", "must be set");
  require(gsd >= 0.0, "prepare.gsd", "must be >= 0 (0 picks the point spacing)");
  require(conf_threshold >= 0.0 && conf_threshold <= 1.0, "prepare.conf_threshold", "must be in [0, 1]");
  require(window_px >= 32, "align.window_px", "must be >= 32");
  require(valid_frac > 0.0 && valid_frac <= 1.0, "align.valid_frac", "must be in (0, 1]");
  require(min_area >= 0.0, "footprints.min_area", "must be >= 0");
  require(search_radius >= 0, "footprints.search_radius", "must be >= 0");
  require(angle_tol > 0.0 && angle_tol < 90.0, "regions.angle_tol", "must be in (0, 90) degrees");
  require(max_orth_dist > 0.0, "regions.max_orth_dist", "must be > 0");
  require(max_centroid_dist > 0.0, "regions.max_centroid_dist", "must be > 0");
  require(min_overlap >= 0.0, "regions.min_overlap", "must be >= 0");
  require(ref_ctf_min >= 0.0 && ref_ctf_min < 1.0, "ctf.ref_ctf_min", "must be in [0, 1)");
  require(min_samples >= 1, "ctf.min_samples", "must be >= 1");
  require(ctf_threshold > 0.0 && ctf_threshold < 1.0, "ctf.threshold", "must be in (0, 1)");
  if (!crs.empty()) {
    // Opaque CRS names are allowed; a malformed EPSG code is a typo.
    const Crs parsed = Crs::parse(crs);
    std::string head = crs.substr(0, 5);
    for (char& ch : head) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    require(head != "EPSG:" || parsed.epsg_code() > 0, "paths.crs", "has a malformed EPSG code");
  }
}

namespace {

// Walks a TOML table, reading known keys and rejecting unknown ones.
class TableReader {
 public:
  TableReader(const toml::table& root, const char* name) : name_(name) {
    if (const auto* node = root.get(name)) {
      table_ = node->as_table();
      if (table_ == nullptr) bad_config(fmt::format("[{}] must be a table", name));
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = node->value<double>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, int>) {
      if (auto v = node->value<std::int64_t>()) {
        out = static_cast<int>(*v);
        return;
      }
    } else if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value<bool>()) {
        out = *v;
        return;
      }
    } else {
      if (auto v = node->value<std::string>()) {
        out = *v;
        return;
      }
    }
    bad_config(fmt::format("{}.{} has the wrong type", name_, key));
  }

  void read_offset(const char* key, std::optional<std::array<double, 3>>& out) {
    seen_.insert(key);
    if (table_ == nullptr) return;
    const toml::node* node = table_->get(key);
    if (node == nullptr) return;
    const toml::array* arr = node->as_array();
    if (arr == nullptr || (arr->size() != 3 && arr->size() != 0)) {
      bad_config(fmt::format("{}.{} must be an array [dx, dy, dz] (or empty)", name_, key));
    }
    if (arr->empty()) {
      out.reset();
      return;
    }
    std::array<double, 3> v{};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto x = (*arr)[i].value<double>();
      if (!x) bad_config(fmt::format("{}.{} must hold numbers", name_, key));
      v[i] = *x;
    }
    out = v;
  }

  void finish() const {
    if (table_ == nullptr) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) bad_config(fmt::format("unknown key {}.{}", name_, k.str()));
    }
  }

 private:
  const char* name_;
  const toml::table* table_ = nullptr;
  std::set<std::string> seen_;
};

fs::path resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    bad_config(fmt::format("TOML syntax error at line {}: {}", e.source().begin.line, e.description()));
  }
  static const std::set<std::string> kTables{"paths", "prepare", "align", "footprints", "regions", "ctf", "report"};
  for (const auto& [k, v] : root) {
    if (!kTables.count(std::string(k.str()))) bad_config(fmt::format("unknown table [{}]", k.str()));
  }

  PipelineConfig c;
  std::string reference, test, mode = to_string(c.test_mode), out_dir = c.out_dir.string(), osm_cache;
  {
    TableReader t(root, "paths");
    t.read("reference", reference);
    t.read("test", test);
    t.read("test_mode", mode);
    t.read("footprints", c.footprints);
    t.read("out_dir", out_dir);
    t.read("crs", c.crs);
    t.finish();
  }
  c.reference = resolve(reference, base_dir);
  c.test = resolve(test, base_dir);
  c.out_dir = resolve(out_dir, base_dir);
  if (c.footprints != "lidar" && c.footprints != "osm") c.footprints = resolve(c.footprints, base_dir).string();
  if (mode == "pointcloud") {
    c.test_mode = TestMode::pointcloud;
  } else if (mode == "dsm") {
    c.test_mode = TestMode::dsm;
  } else if (mode == "mesh") {
    c.test_mode = TestMode::mesh;
  } else {
    bad_config("paths.test_mode must be one of pointcloud, dsm, mesh");
  }
  {
    TableReader t(root, "prepare");
    t.read("gsd", c.gsd);
    t.read("conf_threshold", c.conf_threshold);
    t.finish();
  }
  {
    TableReader t(root, "align");
    t.read("window_px", c.window_px);
    t.read("valid_frac", c.valid_frac);
    t.read_offset("manual_offset", c.manual_offset);
    t.finish();
  }
  {
    TableReader t(root, "footprints");
    t.read("dp_epsilon", c.dp_epsilon);
    t.read("min_area", c.min_area);
    t.read("search_radius", c.search_radius);
    t.read("osm_cache", osm_cache);
    t.read("osm_endpoint", c.osm_endpoint);
    t.finish();
  }
  c.osm_cache = resolve(osm_cache, base_dir);
  {
    TableReader t(root, "regions");
    t.read("angle_tol", c.angle_tol);
    t.read("max_orth_dist", c.max_orth_dist);
    t.read("max_centroid_dist", c.max_centroid_dist);
    t.read("min_overlap", c.min_overlap);
    t.finish();
  }
  {
    TableReader t(root, "ctf");
    t.read("ref_ctf_min", c.ref_ctf_min);
    t.read("min_samples", c.min_samples);
    t.read("threshold", c.ctf_threshold);
    t.finish();
  }
  {
    TableReader t(root, "report");
    t.read("log_x", c.log_x);
    t.finish();
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string config_to_toml(const PipelineConfig& c) {
  toml::array offset;
  if (c.manual_offset) {
    for (double v : *c.manual_offset) offset.push_back(v);
  }
  const toml::table root{
      {"paths", toml::table{{"reference", c.reference.string()},
                            {"test", c.test.string()},
                            {"test_mode", to_string(c.test_mode)},
                            {"footprints", c.footprints},
                            {"out_dir", c.out_dir.string()},
                            {"crs", c.crs}}},
      {"prepare", toml::table{{"gsd", c.gsd}, {"conf_threshold", c.conf_threshold}}},
      {"align", toml::table{{"window_px", c.window_px}, {"valid_frac", c.valid_frac}, {"manual_offset", offset}}},
      {"footprints", toml::table{{"dp_epsilon", c.dp_epsilon},
                                 {"min_area", c.min_area},
                                 {"search_radius", c.search_radius},
                                 {"osm_cache", c.osm_cache.string()},
                                 {"osm_endpoint", c.osm_endpoint}}},
      {"regions", toml::table{{"angle_tol", c.angle_tol},
                              {"max_orth_dist", c.max_orth_dist},
                              {"max_centroid_dist", c.max_centroid_dist},
                              {"min_overlap", c.min_overlap}}},
      {"ctf", toml::table{{"ref_ctf_min", c.ref_ctf_min}, {"min_samples", c.min_samples}, {"threshold", c.ctf_threshold}}},
      {"report", toml::table{{"log_x", c.log_x}}},
  };
  std::stringstream ss;
  ss << root << '\n';
  return ss.str();
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::config:
      case ErrorKind::invalid_argument: return 2;
      case ErrorKind::missing_input: return 3;
      case ErrorKind::numerical: return 4;
      default: return 1;
    }
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json stage_parameters(const PipelineConfig& c, Stage s) {
  switch (s) {
    case Stage::prepare: return {{"gsd", c.gsd}, {"conf_threshold", c.conf_threshold}, {"crs", c.crs}};
    case Stage::align:
      return {{"test_mode", to_string(c.test_mode)},
              {"window_px", c.window_px},
              {"valid_frac", c.valid_frac},
              {"manual_offset", c.manual_offset ? json(*c.manual_offset) : json(nullptr)},
              {"crs", c.crs}};
    case Stage::footprints:
      return {{"source", c.footprints},          {"dp_epsilon", c.dp_epsilon},     {"min_area", c.min_area},
              {"search_radius", c.search_radius}, {"osm_endpoint", c.osm_endpoint}, {"crs", c.crs}};
    case Stage::regions:
      return {{"angle_tol", c.angle_tol},
              {"max_orth_dist", c.max_orth_dist},
              {"max_centroid_dist", c.max_centroid_dist},
              {"min_overlap", c.min_overlap}};
    case Stage::ctf: return {{"ref_ctf_min", c.ref_ctf_min}, {"min_samples", c.min_samples}};
    case Stage::fit: return {{"threshold", c.ctf_threshold}};
    case Stage::report: return {{"threshold", c.ctf_threshold}, {"log_x", c.log_x}};
  }
  return {};
}

const char* producer_of(const std::string& file) {
  using namespace artifacts;
  static const std::map<std::string, const char*> kProducer{
      {reference_dsm, "prepare"},   {reference_dtm, "prepare"}, {building_mask, "prepare"},
      {ground_mask, "prepare"},     {aligned_test, "align"},    {alignment, "align"},
      {footprints, "footprints"},   {regions, "regions"},       {records_csv, "ctf"},
      {records_geojson, "ctf"},     {accuracy, "ctf"},          {fit, "fit"}};
  const auto it = kProducer.find(file);
  return it == kProducer.end() ? nullptr : it->second;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  config_.validate();
  fs::create_directories(config_.out_dir);
  lock_path_ = config_.out_dir / artifacts::lock;
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string where = lock_path_.string();
    lock_path_.clear();
    throw Error(ErrorKind::io, "output directory is in use by another run (lock file " + where +
                                   "); delete the lock file if no other run is active");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  if (::write(fd, pid.data(), pid.size()) < 0) log::debug("could not write pid to lock file");
  ::close(fd);
  created_ = utc_now();
  load_manifest();
}

Pipeline::~Pipeline() {
  if (!lock_path_.empty()) {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
}

void Pipeline::load_manifest() {
  const fs::path p = out(artifacts::manifest);
  if (!fs::exists(p)) return;
  try {
    const json m = read_json_file(p);
    created_ = m.value("created", created_);
    for (const auto& [name, s] : m.at("stages").items()) {
      StageRecord rec;
      rec.key = s.at("key").get<std::string>();
      rec.finished = s.value("finished", "");
      for (const auto& [f, h] : s.at("outputs").items()) rec.outputs[f] = h.get<std::string>();
      stages_[name] = rec;
    }
  } catch (const std::exception& e) {
    log::warn(fmt::format("ignoring unreadable manifest {}: {}", p.string(), e.what()));
    stages_.clear();
  }
}

void Pipeline::write_manifest() const {
  json stages = json::object();
  for (const auto& [name, rec] : stages_) {
    stages[name] = {{"key", rec.key}, {"finished", rec.finished}, {"outputs", rec.outputs}};
  }
  json m = {{"tool", "ctf3d"},
            {"version", kToolVersion},
            {"created", created_},
            {"updated", utc_now()},
            {"config", config_to_toml(config_)},
            {"stages", stages}};
  // Headline results, copied from stage outputs when present.
  auto attach = [&](const char* key, const char* file) {
    const fs::path p = out(file);
    if (fs::exists(p)) m[key] = read_json_file(p);
  };
  attach("alignment", artifacts::alignment);
  attach("vertical_accuracy", artifacts::accuracy);
  attach("fit", artifacts::fit);
  if (fs::exists(out(artifacts::records_csv))) {
    json counts = json::object();
    for (const auto& r : load_records_csv(out(artifacts::records_csv))) {
      counts[to_string(r.status)] = counts.value(to_string(r.status), 0) + 1;
    }
    m["record_counts"] = counts;
  }
  // Alignment windows are verbose; keep only the offsets here.
  if (m.contains("alignment")) m["alignment"].erase("windows");
  write_json_file(m, out(artifacts::manifest));
}

std::string Pipeline::stage_key(Stage stage, const std::vector<fs::path>& inputs) const {
  json inputs_j = json::array();
  for (const auto& p : inputs) inputs_j.push_back({p.filename().string(), sha256_file(p)});
  const json k = {{"stage", to_string(stage)},
                  {"version", kToolVersion},
                  {"parameters", stage_parameters(config_, stage)},
                  {"inputs", inputs_j}};
  return sha256_hex(k.dump());
}

bool Pipeline::outputs_current(const StageRecord& rec) const {
  for (const auto& [f, h] : rec.outputs) {
    const fs::path p = out(f.c_str());
    if (!fs::exists(p) || sha256_file(p) != h) return false;
  }
  return !rec.outputs.empty();
}

namespace {

fs::path need(const fs::path& p, const char* stage) {
  if (fs::exists(p)) return p;
  const char* producer = producer_of(p.filename().string());
  if (producer != nullptr) {
    throw Error(ErrorKind::missing_input, fmt::format("stage '{}' needs {}; run `ctf3d {}` first", stage,
                                                      p.string(), producer));
  }
  throw Error(ErrorKind::missing_input, fmt::format("stage '{}' needs {}, which does not exist", stage, p.string()));
}

}  // namespace

StageResult Pipeline::run_stage(Stage stage) {
  const char* name = to_string(stage);
  std::vector<fs::path> inputs;
  auto opt = [&](const char* f) {
    if (fs::exists(out(f))) inputs.push_back(out(f));
  };
  switch (stage) {
    case Stage::prepare:
      inputs.push_back(need(config_.reference, name));
      if (fs::exists(config_.reference.string() + ".c3dl")) inputs.push_back(config_.reference.string() + ".c3dl");
      break;
    case Stage::align:
      inputs.push_back(need(out(artifacts::reference_dsm), name));
      inputs.push_back(need(config_.test, name));
      break;
    case Stage::footprints:
      inputs.push_back(need(out(artifacts::reference_dsm), name));
      opt(artifacts::building_mask);
      opt(artifacts::ground_mask);
      if (config_.footprints != "lidar" && config_.footprints != "osm") inputs.push_back(need(config_.footprints, name));
      break;
    case Stage::regions:
      inputs.push_back(need(out(artifacts::footprints), name));
      inputs.push_back(need(out(artifacts::reference_dsm), name));
      break;
    case Stage::ctf:
      inputs.push_back(need(out(artifacts::aligned_test), name));
      inputs.push_back(need(out(artifacts::reference_dsm), name));
      inputs.push_back(need(out(artifacts::regions), name));
      opt(artifacts::building_mask);
      break;
    case Stage::fit: inputs.push_back(need(out(artifacts::records_csv), name)); break;
    case Stage::report:
      inputs.push_back(need(out(artifacts::records_csv), name));
      inputs.push_back(need(out(artifacts::fit), name));
      opt(artifacts::alignment);
      opt(artifacts::accuracy);
      break;
  }

  const std::string key = stage_key(stage, inputs);
  StageResult result{stage, false, {}};
  const auto it = stages_.find(name);
  if (it != stages_.end() && it->second.key == key && outputs_current(it->second)) {
    log::info(fmt::format("{}: outputs are current, skipping", name));
    result.skipped = true;
    result.outputs = it->second.outputs;
    return result;
  }

  log::info(fmt::format("{}: running", name));
  std::vector<std::string> files;
  try {
    files = execute(stage);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", name, e.what()));
  }
  StageRecord rec;
  rec.key = key;
  rec.finished = utc_now();
  for (const auto& f : files) rec.outputs[f] = sha256_file(out(f.c_str()));
  stages_[name] = rec;
  write_manifest();
  result.outputs = rec.outputs;
  return result;
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (Stage s : kAllStages) out.push_back(run_stage(s));
  return out;
}

namespace {

Crs override_crs(const PipelineConfig& c) { return c.crs.empty() ? Crs{} : Crs::parse(c.crs); }

Raster read_reference_dsm(const fs::path& p) { return read_geotiff(p); }

Raster with_crs(const Raster& r, const Crs& crs) {
  Raster tagged(r.width(), r.height(), r.transform(), crs, r.nodata());
  std::copy(r.values().begin(), r.values().end(), tagged.values().begin());
  return tagged;
}

void write_json_pretty(const json& j, const fs::path& p) { write_json_file(j, p); }

}  // namespace

std::vector<std::string> Pipeline::execute(Stage stage) {
  namespace a = artifacts;
  const PipelineConfig& c = config_;
  switch (stage) {
    case Stage::prepare: {
      if (is_raster_path(c.reference)) {
        // A reference DSM is used as is; no classified points means no masks.
        Raster dsm = read_geotiff(c.reference);
        if (dsm.crs().empty()) {
          if (c.crs.empty()) {
            throw Error(ErrorKind::config, "reference DSM " + c.reference.string() +
                                               " has no CRS; set paths.crs or pass --crs");
          }
          dsm = with_crs(dsm, override_crs(c));
        }
        write_geotiff(dsm, out(a::reference_dsm));
        for (const char* stale : {a::reference_dtm, a::building_mask, a::ground_mask}) fs::remove(out(stale));
        return {a::reference_dsm};
      }
      LoadOptions lo;
      if (!c.crs.empty()) lo.crs_override = override_crs(c);
      const ClassifiedPointCloud cloud = load_point_cloud(c.reference, lo);
      const double gsd = c.gsd > 0.0 ? c.gsd : estimate_anps(cloud);
      log::info(fmt::format("prepare: {} points, gsd {:.3f} m{}", cloud.size(), gsd, c.gsd > 0 ? "" : " (point spacing)"));
      const Raster dsm = rasterize_max_dsm(cloud, gsd);
      write_geotiff(dsm, out(a::reference_dsm));
      const MaskPair masks = build_masks(cloud, dsm, c.conf_threshold);
      write_geotiff(masks.building, out(a::building_mask));
      write_geotiff(masks.ground, out(a::ground_mask));
      const Raster seeds = rasterize_min_ground(cloud, dsm);
      if (seeds.count_valid() == 0) {
        throw Error(ErrorKind::numerical, "reference cloud has no ground points, so no DTM can be built (" +
                                              out(a::reference_dsm).string() + " and the masks were written)");
      }
      write_geotiff(laplace_fill(seeds), out(a::reference_dtm));
      return {a::reference_dsm, a::building_mask, a::ground_mask, a::reference_dtm};
    }

    case Stage::align: {
      const Raster ref = read_reference_dsm(out(a::reference_dsm));
      Raster test;
      switch (c.test_mode) {
        case TestMode::dsm: {
          test = read_geotiff(c.test);
          if (test.crs().empty() && !c.crs.empty()) test = with_crs(test, override_crs(c));
          if (!(test.crs() == ref.crs())) {
            throw Error(ErrorKind::invalid_argument,
                        fmt::format("test DSM CRS '{}' differs from the reference CRS '{}'; reproject the test DSM first",
                                    test.crs().id(), ref.crs().id()));
          }
          break;
        }
        case TestMode::pointcloud: {
          LoadOptions lo;
          lo.target_crs = ref.crs();
          if (!c.crs.empty()) lo.crs_override = override_crs(c);
          test = rasterize_max_dsm(load_point_cloud(c.test, lo), ref);
          break;
        }
        case TestMode::mesh: {
          const Crs crs = c.crs.empty() ? ref.crs() : override_crs(c);
          if (!(crs == ref.crs())) {
            throw Error(ErrorKind::invalid_argument, "mesh CRS must match the reference CRS");
          }
          test = rasterize_mesh(load_obj_mesh(c.test.string(), crs), ref);
          break;
        }
      }
      GlobalAlignment al;
      if (c.manual_offset) {
        al.dx = (*c.manual_offset)[0];
        al.dy = (*c.manual_offset)[1];
        al.dz = (*c.manual_offset)[2];
        al.window_px = c.window_px;
        al.manual = true;
      } else {
        const Raster on_grid = test.same_grid(ref) ? test : resample_to_grid(test, ref);
        al = global_align(on_grid, ref, AlignOptions{c.window_px, c.valid_frac});
      }
      log::info(fmt::format("align: dx {:.3f} m, dy {:.3f} m, dz {:.3f} m{}", al.dx, al.dy, al.dz,
                            al.manual ? " (manual)" : ""));
      write_geotiff(apply_alignment(test, al, ref), out(a::aligned_test));
      write_json_pretty(alignment_to_json(al), out(a::alignment));
      return {a::aligned_test, a::alignment};
    }

    case Stage::footprints: {
      const Raster ref = read_reference_dsm(out(a::reference_dsm));
      const bool have_masks = fs::exists(out(a::building_mask)) && fs::exists(out(a::ground_mask));
      std::optional<MaskPair> masks;
      if (have_masks) masks = MaskPair{read_geotiff(out(a::building_mask)), read_geotiff(out(a::ground_mask))};
      FootprintSet fps;
      if (c.footprints == "lidar") {
        if (!masks) {
          throw Error(ErrorKind::config,
                      "footprints = \"lidar\" needs a classified reference point cloud; supply a GeoJSON file instead");
        }
        PolygonizeOptions po;
        po.min_area = c.min_area;
        po.dp_epsilon = c.dp_epsilon;
        fps = polygonize_mask(masks->building, po);
      } else {
        if (c.footprints == "osm") {
          if (!ref.crs().convertible()) throw Error(ErrorKind::config, "OSM footprints need a UTM or EPSG:4326 reference");
          const auto e = ref.extent();  // x0, y0, x1, y1
          LonLatBox box{1e9, 1e9, -1e9, -1e9};
          for (Point2 p : {Point2{e[0], e[1]}, Point2{e[2], e[1]}, Point2{e[0], e[3]}, Point2{e[2], e[3]}}) {
            const Point2 ll = convert_point(p, ref.crs(), Crs::epsg(4326));
            box.west = std::min(box.west, ll.x), box.east = std::max(box.east, ll.x);
            box.south = std::min(box.south, ll.y), box.north = std::max(box.north, ll.y);
          }
          OsmOptions oo;
          oo.endpoint = c.osm_endpoint;
          oo.cache_dir = c.osm_cache.empty() ? c.out_dir / "osm_cache" : c.osm_cache;
          fs::create_directories(oo.cache_dir);
          fps = fetch_osm_footprints(box, ref.crs(), oo);
        } else {
          fps = load_footprints_geojson(c.footprints, ref.crs());
        }
        if (masks && c.search_radius > 0) {
          fps = align_footprints(fps, *masks, c.search_radius);
        } else if (c.search_radius > 0) {
          log::info("footprints: no classification masks for this reference; footprints used as given");
        }
      }
      log::info(fmt::format("footprints: {} buildings", fps.size()));
      save_footprints_geojson(fps, out(a::footprints));
      return {a::footprints};
    }

    case Stage::regions: {
      const Raster ref = read_reference_dsm(out(a::reference_dsm));
      const FootprintSet fps = load_footprints_geojson(out(a::footprints), ref.crs());
      RegionConfig rc;
      rc.angle_tol_deg = c.angle_tol;
      rc.max_orth_dist = c.max_orth_dist;
      rc.max_centroid_dist = c.max_centroid_dist;
      rc.min_overlap = c.min_overlap;
      rc.min_depth = ref.gsd();
      const auto regions = build_all_regions(fps, rc);
      log::info(fmt::format("regions: {} evaluation regions", regions.size()));
      save_regions_geojson(regions, ref.crs(), out(a::regions));
      return {a::regions};
    }

    case Stage::ctf: {
      const Raster ref = read_reference_dsm(out(a::reference_dsm));
      const Raster test = read_geotiff(out(a::aligned_test));
      const auto regions = load_regions_geojson(out(a::regions));
      CtfConfig cc;
      cc.min_samples = static_cast<std::size_t>(c.min_samples);
      cc.ref_ctf_min = c.ref_ctf_min;
      const auto records = filter_records(compute_all_ctf(test, ref, regions, cc), c.ref_ctf_min);
      save_records_csv(records, out(a::records_csv));
      save_records_geojson(records, ref.crs(), out(a::records_geojson));

      json acc;
      auto stats = [](const VerticalAccuracy& v) {
        return json{{"rmse", v.rmse}, {"median_error", v.median_error}, {"le90", v.le90}, {"n_valid", v.n_valid}};
      };
      try {
        acc["all"] = stats(vertical_accuracy(test, ref));
      } catch (const Error& e) {
        acc["all"] = {{"error", e.what()}};
      }
      if (fs::exists(out(a::building_mask))) {
        const Raster ground = read_geotiff(out(a::ground_mask));
        try {
          acc["ground"] = stats(vertical_accuracy(test, ref, &ground));
        } catch (const Error& e) {
          acc["ground"] = {{"error", e.what()}};
        }
      }
      write_json_pretty(acc, out(a::accuracy));
      return {a::records_csv, a::records_geojson, a::accuracy};
    }

    case Stage::fit: {
      const auto records = load_records_csv(out(a::records_csv));
      std::map<std::string, int> counts;
      for (const auto& r : records) counts[to_string(r.status)]++;
      if (counts["ok"] < 3) {
        std::string detail;
        for (const auto& [k, n] : counts) detail += fmt::format("{}{}={}", detail.empty() ? "" : ", ", k, n);
        throw Error(ErrorKind::numerical,
                    fmt::format("need at least 3 valid records to fit the model, have {} ({})", counts["ok"],
                                detail.empty() ? "no records" : detail));
      }
      const CtfModelFit fit = fit_ctf_model(records);
      std::vector<double> thresholds{c.ctf_threshold};
      for (double t : {0.1, 0.2}) {
        if (std::find(thresholds.begin(), thresholds.end(), t) == thresholds.end()) thresholds.push_back(t);
      }
      save_fit_json(fit, thresholds, out(a::fit));
      return {a::fit};
    }

    case Stage::report: {
      const auto records = load_records_csv(out(a::records_csv));
      const CtfModelFit fit = load_fit_json(out(a::fit));
      PlotOptions po;
      po.log_x = c.log_x;
      po.threshold = c.ctf_threshold;
      {
        std::ofstream svg(out(a::plot));
        svg << ctf_plot_svg(records, fit, po);
        if (!svg) throw Error(ErrorKind::io, "cannot write " + out(a::plot).string());
      }
      json summary = {{"fit", read_json_file(out(a::fit))}, {"threshold", c.ctf_threshold}};
      summary["d_star"] = c.ctf_threshold < fit.amp ? json(threshold_distance(fit, c.ctf_threshold)) : json(nullptr);
      json counts = json::object();
      for (const auto& r : records) counts[to_string(r.status)] = counts.value(to_string(r.status), 0) + 1;
      summary["record_counts"] = counts;
      if (fs::exists(out(a::alignment))) {
        json al = read_json_file(out(a::alignment));
        al.erase("windows");
        summary["alignment"] = al;
      }
      if (fs::exists(out(a::accuracy))) summary["vertical_accuracy"] = read_json_file(out(a::accuracy));
      write_json_pretty(summary, out(a::summary));
      return {a::plot, a::summary};
    }
  }
  return {};
}

TribarParams standard_tribar_params() {
  TribarParams p;
  p.gsd = 0.25;
  p.bar_width = 0.3;
  p.gap = 0.3;
  p.gap_scale = 1.1;
  p.bar_scale = 1.1;
  p.n_groups = 36;
  return p;
}

TribarOutputs write_tribar_fixture(const TribarParams& params, int levels, const fs::path& dir) {
  fs::create_directories(dir);
  const Tribar tb = generate_tribar(params);
  TribarOutputs outs;
  Raster cur = tb.dsm;
  for (int k = 0; k <= levels; ++k) {
    if (k > 0) cur = downsample2(cur);
    const fs::path p = dir / fmt::format("tribar_gsd{:g}.tif", cur.gsd());
    write_geotiff(cur, p);
    outs.rasters.push_back(p);
  }
  outs.footprints = dir / "tribar_footprints.geojson";
  save_footprints_geojson(tb.footprints, outs.footprints);
  return outs;
}

}  // namespace ctf3d
