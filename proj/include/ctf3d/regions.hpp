#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "ctf3d/footprint_set.hpp"
#include "ctf3d/geom.hpp"

namespace ctf3d {

struct BuildingPair {
  std::int64_t id_a = 0;
  std::int64_t id_b = 0;
  double centroid_distance = 0.0;

  friend bool operator==(const BuildingPair&, const BuildingPair&) = default;
};

struct RegionConfig {
  double max_centroid_dist = 150.0;
  double max_orth_dist = 30.0;
  double angle_tol_deg = 10.0;
  double min_overlap = 2.0;
  /// Smallest building-rectangle depth; normally one raster cell.
  double min_depth = 1.0;
  /// Gaps narrower than this are treated as touching buildings.
  double min_separation = 1e-3;
};

/// Ground rectangle between two buildings plus one rectangle inside each
/// building, all sharing the same axis and along-axis extent.
struct EvaluationRegion {
  BuildingPair pair;
  OrientedRect center;
  OrientedRect region_a;  // inside building pair.id_a
  OrientedRect region_b;  // inside building pair.id_b
  double d = 0.0;         // orthogonal separation of the facing edges
  double overlap = 0.0;
  int edge_a = -1;  // exterior edge index in building a
  int edge_b = -1;
};

/// Unordered pairs closer than max_centroid_dist (centroid to centroid),
/// with id_a < id_b, sorted by ids.
std::vector<BuildingPair> pair_buildings(const FootprintSet& fps, double max_centroid_dist);

/// Every edge-pair candidate for a pair that passes the parallelism, overlap,
/// separation, facing and obstruction tests, in edge-index order.
std::vector<EvaluationRegion> region_candidates(const BuildingPair& pair, const FootprintSet& fps,
                                                const RegionConfig& config);

/// The candidate with the smallest separation; ties go to the larger overlap
/// and then to the lower edge indices.
std::optional<EvaluationRegion> find_evaluation_region(const BuildingPair& pair, const FootprintSet& fps,
                                                       const RegionConfig& config);

std::vector<EvaluationRegion> build_all_regions(const FootprintSet& fps, const RegionConfig& config);

/// One feature per rectangle (center, building_a, building_b) sharing a
/// region_id. Rectangle parameters are stored in native coordinates so the
/// file reloads exactly.
void save_regions_geojson(const std::vector<EvaluationRegion>& regions, const Crs& crs,
                          const std::filesystem::path& path);
std::vector<EvaluationRegion> load_regions_geojson(const std::filesystem::path& path, Crs* crs = nullptr);

}  // namespace ctf3d
