#include "ctf3d/geojson.hpp"

#include <fstream>
#include <set>

#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"

namespace ctf3d {
namespace {

const Crs kWgs84 = Crs::epsg(4326);

nlohmann::json ring_json(const Ring& ring, const Crs& crs) {
  nlohmann::json out = nlohmann::json::array();
  auto push = [&](Point2 p) {
    if (crs.convertible() && !crs.is_geographic()) p = convert_point(p, crs, kWgs84);
    out.push_back({p.x, p.y});
  };
  for (const Point2& p : ring) push(p);
  if (!ring.empty()) push(ring.front());
  return out;
}

Ring ring_from_json(const nlohmann::json& coords, const Crs& from, const Crs& to) {
  Ring ring;
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2) throw Error(ErrorKind::parse, "GeoJSON position is not [x, y]");
    Point2 p{pos[0].get<double>(), pos[1].get<double>()};
    if (!(from == to)) p = convert_point(p, from, to);
    ring.push_back(p);
  }
  return ring;
}

}  // namespace

nlohmann::json polygon_geometry(const std::vector<Ring>& rings, const Crs& crs) {
  nlohmann::json coords = nlohmann::json::array();
  for (const Ring& r : rings) coords.push_back(ring_json(r, crs));
  return {{"type", "Polygon"}, {"coordinates", coords}};
}

nlohmann::json feature_collection(nlohmann::json features, const Crs& crs) {
  nlohmann::json fc = {{"type", "FeatureCollection"}};
  if (crs.convertible()) {
    if (!crs.is_geographic()) fc["projected_crs"] = crs.id();
  } else if (!crs.empty()) {
    fc["crs"] = {{"type", "name"}, {"properties", {{"name", crs.id()}}}};
  }
  fc["features"] = std::move(features);
  return fc;
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path, int indent) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << j.dump(indent) << '\n';
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("invalid JSON in '" + path.string() + "': " + e.what(), e.byte);
  }
}

void save_footprints_geojson(const FootprintSet& fps, const std::filesystem::path& path) {
  fps.validate();
  nlohmann::json features = nlohmann::json::array();
  for (const Footprint& f : fps.features) {
    std::vector<Ring> rings{f.polygon.exterior()};
    rings.insert(rings.end(), f.polygon.holes().begin(), f.polygon.holes().end());
    features.push_back({{"type", "Feature"},
                        {"id", f.id},
                        {"geometry", polygon_geometry(rings, fps.crs)},
                        {"properties",
                         {{"id", f.id},
                          {"source", to_string(f.source)},
                          {"shift_x_m", f.alignment_shift.x},
                          {"shift_y_m", f.alignment_shift.y},
                          {"alignment_flagged", f.alignment_flagged}}}});
  }
  write_json_file(feature_collection(std::move(features), fps.crs), path);
}

FootprintSet footprints_from_geojson(const nlohmann::json& doc, const Crs& target_crs) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw Error(ErrorKind::parse, "GeoJSON root is not a FeatureCollection");
  }
  Crs coords_crs = kWgs84;
  Crs native;
  if (doc.contains("crs")) {
    coords_crs = Crs::parse(doc["crs"].at("properties").at("name").get<std::string>());
    native = coords_crs;
  } else if (doc.contains("projected_crs")) {
    native = Crs::parse(doc["projected_crs"].get<std::string>());
  }
  const Crs target = !target_crs.empty() ? target_crs : (!native.empty() ? native : coords_crs);
  if (!(coords_crs == target) && (!coords_crs.convertible() || !target.convertible())) {
    throw Error(ErrorKind::invalid_argument, "cannot convert footprints from '" + coords_crs.id() + "' to '" + target.id() + "'");
  }

  struct Pending {
    std::optional<std::int64_t> id;
    Footprint f;
  };
  std::vector<Pending> pending;
  std::set<std::int64_t> used;
  std::size_t index = 0;
  for (const auto& feat : doc.value("features", nlohmann::json::array())) {
    ++index;
    const auto& geom = feat.contains("geometry") ? feat["geometry"] : nlohmann::json();
    const std::string type = geom.is_object() ? geom.value("type", "") : "";
    std::vector<nlohmann::json> parts;
    if (type == "Polygon") {
      parts.push_back(geom.at("coordinates"));
    } else if (type == "MultiPolygon") {
      for (const auto& p : geom.at("coordinates")) parts.push_back(p);
    } else {
      log::warn("GeoJSON feature " + std::to_string(index) + " has geometry '" + type + "'; skipped");
      continue;
    }
    const nlohmann::json props = feat.contains("properties") && feat["properties"].is_object()
                                     ? feat["properties"] : nlohmann::json::object();
    std::optional<std::int64_t> id;
    if (props.contains("id") && props["id"].is_number_integer()) {
      id = props["id"].get<std::int64_t>();
    } else if (feat.contains("id") && feat["id"].is_number_integer()) {
      id = feat["id"].get<std::int64_t>();
    }
    FootprintSource source = FootprintSource::provided;
    if (props.contains("source") && props["source"].is_string()) {
      source = footprint_source_from_string(props["source"].get<std::string>());
    }
    bool first_part = true;
    for (const auto& rings : parts) {
      try {
        std::vector<Ring> holes;
        Ring ext;
        for (std::size_t k = 0; k < rings.size(); ++k) {
          Ring r = ring_from_json(rings[k], coords_crs, target);
          if (k == 0) {
            ext = std::move(r);
          } else {
            holes.push_back(std::move(r));
          }
        }
        Pending p;
        p.f.polygon = Polygon::make(std::move(ext), std::move(holes));
        p.f.source = source;
        p.f.alignment_shift = {props.value("shift_x_m", 0.0), props.value("shift_y_m", 0.0)};
        p.f.alignment_flagged = props.value("alignment_flagged", false);
        if (first_part && id && !used.contains(*id)) {
          p.id = id;
          used.insert(*id);
        }
        first_part = false;
        pending.push_back(std::move(p));
      } catch (const Error& e) {
        log::warn("GeoJSON feature " + std::to_string(index) + ": invalid polygon skipped (" + e.what() + ")");
      }
    }
  }
  std::int64_t next = used.empty() ? 1 : *used.rbegin() + 1;
  FootprintSet out;
  out.crs = target;
  for (Pending& p : pending) {
    p.f.id = p.id ? *p.id : next++;
    out.features.push_back(std::move(p.f));
  }
  return out;
}

FootprintSet load_footprints_geojson(const std::filesystem::path& path, const Crs& target_crs) {
  return footprints_from_geojson(read_json_file(path), target_crs);
}

}  // namespace ctf3d
