#pragma once

#include <string>

#include "ctf3d/geom.hpp"

namespace ctf3d {

/// Coordinate reference system identifier. Supported for conversion:
/// EPSG:4326 (lon/lat degrees) and WGS84 UTM zones EPSG:326xx / EPSG:327xx.
/// Anything else is carried as an opaque id and only compared for equality.
class Crs {
 public:
  Crs() = default;
  /// Accepts "EPSG:32611", "epsg:32611", "32611" or an opaque name.
  static Crs parse(const std::string& text);
  static Crs epsg(int code);

  bool empty() const { return id_.empty(); }
  int epsg_code() const { return epsg_; }
  const std::string& id() const { return id_; }
  bool is_geographic() const { return epsg_ == 4326; }
  bool is_utm() const { return utm_zone() != 0; }
  /// Zone number 1..60 for UTM codes, else 0.
  int utm_zone() const;
  bool utm_south() const { return epsg_ >= 32701 && epsg_ <= 32760; }
  bool convertible() const { return is_geographic() || is_utm(); }

  friend bool operator==(const Crs& a, const Crs& b) { return a.id_ == b.id_; }

 private:
  int epsg_ = 0;
  std::string id_;
};

struct LonLat {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees
};

/// WGS84 transverse Mercator (Krueger series, sixth order in n).
Point2 utm_forward(LonLat ll, int zone, bool south);
LonLat utm_inverse(Point2 en, int zone, bool south);

/// Horizontal conversion between two supported systems. Geographic points
/// use x = longitude, y = latitude. Throws when either side is unsupported
/// and the two ids differ.
Point2 convert_point(Point2 p, const Crs& from, const Crs& to);

}  // namespace ctf3d
