#include "ctf3d/footprint_set.hpp"

#include <cmath>
#include <unordered_set>

#include "ctf3d/error.hpp"

namespace ctf3d {

const char* to_string(FootprintSource s) {
  switch (s) {
    case FootprintSource::lidar: return "lidar";
    case FootprintSource::osm: return "osm";
    case FootprintSource::provided: return "provided";
  }
  return "provided";
}

FootprintSource footprint_source_from_string(const std::string& s) {
  if (s == "lidar") return FootprintSource::lidar;
  if (s == "osm") return FootprintSource::osm;
  if (s == "provided") return FootprintSource::provided;
  throw Error(ErrorKind::parse, "unknown footprint source '" + s + "'");
}

std::ptrdiff_t FootprintSet::find(std::int64_t id) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].id == id) return static_cast<std::ptrdiff_t>(i);
  }
  return -1;
}

void FootprintSet::validate() const {
  std::unordered_set<std::int64_t> seen;
  for (const Footprint& f : features) {
    if (!seen.insert(f.id).second) {
      throw Error(ErrorKind::invalid_argument, "duplicate footprint id " + std::to_string(f.id));
    }
    if (!std::isfinite(f.alignment_shift.x) || !std::isfinite(f.alignment_shift.y)) {
      throw Error(ErrorKind::invalid_argument, "footprint " + std::to_string(f.id) + " has a non-finite shift");
    }
  }
}

}  // namespace ctf3d
