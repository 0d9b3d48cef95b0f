#pragma once

#include <filesystem>
#include <vector>

#include "ctf3d/crs.hpp"
#include "ctf3d/footprint_set.hpp"
#include "json.hpp"

namespace ctf3d {

// GeoJSON conventions used throughout the tool:
//  * Data in a convertible CRS (UTM or EPSG:4326) is written as RFC 7946
//    lon/lat. The projected CRS is recorded in the foreign member
//    "projected_crs" so the loader can map coordinates back exactly.
//  * Data in any other CRS keeps its own coordinates and carries a legacy
//    named "crs" member, which the loader honors.

/// Polygon geometry object (exterior + holes) from rings in `crs`.
nlohmann::json polygon_geometry(const std::vector<Ring>& rings, const Crs& crs);

/// FeatureCollection wrapper with the CRS members described above.
nlohmann::json feature_collection(nlohmann::json features, const Crs& crs);

/// Writes JSON to a file with a trailing newline.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path, int indent = 1);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// FeatureCollection of Polygons with "id", "source", shift and flag properties.
void save_footprints_geojson(const FootprintSet& fps, const std::filesystem::path& path);

/// Reads Polygon and MultiPolygon features (each part becomes a feature)
/// and converts them to `target_crs` (empty: the file's projected CRS if
/// recorded, else the coordinates' own CRS). Other geometry types and
/// invalid rings are skipped with a warning; missing ids are assigned
/// sequentially after the largest explicit id.
FootprintSet load_footprints_geojson(const std::filesystem::path& path, const Crs& target_crs = {});
FootprintSet footprints_from_geojson(const nlohmann::json& doc, const Crs& target_crs = {});

}  // namespace ctf3d
