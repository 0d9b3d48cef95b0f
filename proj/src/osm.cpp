#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "ctf3d/osm.hpp"

#include <fmt/format.h>

#include <fstream>
#include <regex>
#include <sstream>

#include "ctf3d/error.hpp"
#include "ctf3d/hash.hpp"
#include "ctf3d/log.hpp"
#include "httplib.h"
#include "json.hpp"

namespace ctf3d {
namespace {

std::string bbox_key(const LonLatBox& b) {
  return fmt::format("{:.7f},{:.7f},{:.7f},{:.7f}", b.south, b.west, b.north, b.east);
}

std::string http_post(const std::string& endpoint, const std::string& body, int timeout_s) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint, m, kUrl)) {
    throw Error(ErrorKind::invalid_argument, "bad Overpass endpoint URL '" + endpoint + "'");
  }
  httplib::Client client(m[1].str());
  client.set_connection_timeout(timeout_s, 0);
  client.set_read_timeout(timeout_s, 0);
  client.set_write_timeout(timeout_s, 0);
  const std::string path = m[2].matched ? m[2].str() : "/";
  auto res = client.Post(path, "data=" + httplib::detail::encode_url(body), "application/x-www-form-urlencoded");
  if (!res) {
    throw Error(ErrorKind::io, "Overpass request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::io, "Overpass request failed with HTTP status " + std::to_string(res->status));
  }
  return res->body;
}

}  // namespace

std::string overpass_query(const LonLatBox& b, int timeout_s) {
  return fmt::format("[out:json][timeout:{}];way[\"building\"]({});out geom;", timeout_s, bbox_key(b));
}

std::filesystem::path osm_cache_path(const std::filesystem::path& cache_dir, const LonLatBox& bbox) {
  return cache_dir / ("overpass-" + sha256_hex(bbox_key(bbox)) + ".json");
}

FootprintSet parse_overpass_json(const std::string& text, const Crs& target_crs) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed Overpass response: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("elements") || !doc["elements"].is_array()) {
    throw ParseError("Overpass response lacks an 'elements' array", 0);
  }
  const Crs wgs84 = Crs::epsg(4326);
  FootprintSet out;
  out.crs = target_crs.empty() ? wgs84 : target_crs;
  for (const auto& el : doc["elements"]) {
    if (el.value("type", "") != "way") continue;
    const std::int64_t id = el.value("id", std::int64_t{0});
    const auto& geom = el.contains("geometry") ? el["geometry"] : nlohmann::json::array();
    const auto& nodes = el.contains("nodes") ? el["nodes"] : nlohmann::json::array();
    bool closed = geom.size() >= 4;
    if (closed && nodes.size() >= 2) {
      closed = nodes.front() == nodes.back();
    } else if (closed) {
      closed = geom.front() == geom.back();
    }
    if (!closed) {
      log::warn("OSM way " + std::to_string(id) + " is not a closed ring; skipped");
      continue;
    }
    Ring ring;
    try {
      for (const auto& g : geom) {
        Point2 p{g.at("lon").get<double>(), g.at("lat").get<double>()};
        if (!(out.crs == wgs84)) p = convert_point(p, wgs84, out.crs);
        ring.push_back(p);
      }
      Footprint f;
      f.id = id;
      f.source = FootprintSource::osm;
      f.polygon = Polygon::make(std::move(ring));
      if (out.find(id) >= 0) continue;
      out.features.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed Overpass way: ") + e.what(), 0);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::invalid_argument) throw;
      log::warn("OSM way " + std::to_string(id) + " is not a valid polygon; skipped");
    }
  }
  return out;
}

FootprintSet fetch_osm_footprints(const LonLatBox& bbox, const Crs& target_crs, const OsmOptions& options) {
  if (!(bbox.west < bbox.east) || !(bbox.south < bbox.north)) {
    throw Error(ErrorKind::invalid_argument, "OSM bbox must have west < east and south < north");
  }
  std::filesystem::path cache;
  if (!options.cache_dir.empty()) {
    cache = osm_cache_path(options.cache_dir, bbox);
    if (std::filesystem::exists(cache)) {
      std::ifstream in(cache, std::ios::binary);
      std::stringstream ss;
      ss << in.rdbuf();
      log::info("OSM cache hit: " + cache.string());
      return parse_overpass_json(ss.str(), target_crs);
    }
  }
  const std::string query = overpass_query(bbox, options.timeout_s);
  std::string body;
  for (int attempt = 0;; ++attempt) {
    try {
      body = http_post(options.endpoint, query, options.timeout_s);
      break;
    } catch (const Error& e) {
      if (attempt >= options.retries) throw;
      log::warn(std::string(e.what()) + "; retrying");
    }
  }
  FootprintSet fps = parse_overpass_json(body, target_crs);
  if (!cache.empty()) {
    std::filesystem::create_directories(options.cache_dir);
    std::ofstream out(cache, std::ios::binary);
    out << body;
  }
  return fps;
}

}  // namespace ctf3d
