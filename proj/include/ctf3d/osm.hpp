#pragma once

#include <filesystem>
#include <string>

#include "ctf3d/crs.hpp"
#include "ctf3d/footprint_set.hpp"

namespace ctf3d {

struct LonLatBox {
  double west = 0.0;
  double south = 0.0;
  double east = 0.0;
  double north = 0.0;
};

struct OsmOptions {
  std::string endpoint = "https://overpass-api.de/api/interpreter";
  std::filesystem::path cache_dir;  // empty disables caching
  int timeout_s = 60;
  int retries = 1;
};

/// Overpass QL for building ways inside the box, with inline geometry.
std::string overpass_query(const LonLatBox& bbox, int timeout_s = 60);

/// Cache file used for a box: "<cache_dir>/overpass-<sha256 of the box>.json".
std::filesystem::path osm_cache_path(const std::filesystem::path& cache_dir, const LonLatBox& bbox);

/// Closed building ways of an Overpass JSON response as footprints in
/// target_crs (source = osm, id = way id). Open ways are skipped with a
/// warning.
FootprintSet parse_overpass_json(const std::string& text, const Crs& target_crs);

/// Queries Overpass (or reads the cached response) for the box.
FootprintSet fetch_osm_footprints(const LonLatBox& bbox, const Crs& target_crs, const OsmOptions& options = {});

}  // namespace ctf3d
