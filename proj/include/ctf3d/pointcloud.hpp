#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctf3d/crs.hpp"

namespace ctf3d {

enum class ClassLabel : std::uint8_t {
  ground = 0,
  vegetation,
  building,
  wall,
  power_line,
  civilian_vehicle,
  truck,
  military_vehicle,
  aircraft,
  pole,
  unlabeled,
};

inline constexpr int kNumClassLabels = 11;

const char* to_string(ClassLabel label);
/// Maps an ASPRS classification code to a label.
/// 2 -> ground, 3/4/5 -> vegetation, 6 -> building, anything else -> unlabeled.
ClassLabel label_from_asprs(int code);
/// Inverse used when writing LAS. Labels without an ASPRS code become 1 (unclassified).
int asprs_from_label(ClassLabel label);

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Structure-of-arrays point cloud with per-point class labels, confidences
/// and withheld flags.
struct ClassifiedPointCloud {
  std::vector<Point3> points;
  std::vector<ClassLabel> labels;
  std::vector<float> confidence;  // [0,1]; 1.0 for hard labels
  std::vector<std::uint8_t> withheld;
  Crs crs;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void reserve(std::size_t n);
  void push_back(Point3 p, ClassLabel label = ClassLabel::unlabeled, float conf = 1.0F,
                 bool is_withheld = false);
  /// Throws if the arrays disagree in length or a value breaks an invariant.
  void validate() const;
};

struct PointFilter {
  std::optional<std::set<ClassLabel>> classes;  // nullopt keeps every class
  bool exclude_withheld = true;
};

/// Order-preserving subset.
ClassifiedPointCloud filter_points(const ClassifiedPointCloud& cloud, const PointFilter& filter);

struct LoadOptions {
  Crs target_crs;                    // empty: keep the file's CRS
  std::optional<Crs> crs_override;   // used when the file carries no usable CRS
  /// Label sidecar; when unset, "<path>.c3dl" is used if it exists.
  std::optional<std::filesystem::path> sidecar;
};

/// Reads a LAS 1.2-1.4 file (point formats 0-10) and converts coordinates to
/// `target_crs`. ASPRS codes map through label_from_asprs; a C3DL sidecar, if
/// present, overrides labels and confidences.
ClassifiedPointCloud load_point_cloud(const std::filesystem::path& path, const LoadOptions& options);

struct SaveOptions {
  double scale = 0.001;  // coordinate quantum in meters
  bool write_sidecar = true;
};

/// Writes LAS 1.4 point format 6 plus an optional "<path>.c3dl" label sidecar.
void save_point_cloud(const ClassifiedPointCloud& cloud, const std::filesystem::path& path,
                      const SaveOptions& options = {});

/// Sidecar with one (label, confidence) pair per point.
/// Layout (little-endian): "C3DL", u32 version = 1, u64 count,
/// then count records of { u8 label, f32 confidence }.
struct LabelSidecar {
  std::vector<ClassLabel> labels;
  std::vector<float> confidence;
};
LabelSidecar read_label_sidecar(const std::filesystem::path& path);
void write_label_sidecar(const std::filesystem::path& path, const LabelSidecar& sidecar);

}  // namespace ctf3d
