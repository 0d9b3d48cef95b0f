#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctf3d/crs.hpp"
#include "ctf3d/geom.hpp"

namespace ctf3d {

enum class FootprintSource { lidar, osm, provided };

const char* to_string(FootprintSource s);
FootprintSource footprint_source_from_string(const std::string& s);

struct Footprint {
  std::int64_t id = 0;
  Polygon polygon;
  FootprintSource source = FootprintSource::provided;
  Point2 alignment_shift{0.0, 0.0};  // meters, already applied to polygon
  bool alignment_flagged = false;    // alignment could not be evaluated
};

struct FootprintSet {
  std::vector<Footprint> features;
  Crs crs;

  std::size_t size() const { return features.size(); }
  bool empty() const { return features.empty(); }
  /// Index of the feature with this id, or -1.
  std::ptrdiff_t find(std::int64_t id) const;
  /// Throws on duplicate ids or non-finite shifts.
  void validate() const;
};

}  // namespace ctf3d
