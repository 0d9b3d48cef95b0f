#include "ctf3d/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "ctf3d/error.hpp"
#include "ctf3d/geojson.hpp"

namespace ctf3d {
namespace {

struct TaggedSegment {
  Segment seg;
  std::size_t footprint;
  int edge;  // exterior edge index, or -1 for hole edges
};

struct Box {
  double x0, y0, x1, y1;
};

Box rect_box(const OrientedRect& r) {
  Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Point2& c : r.corners()) {
    b.x0 = std::min(b.x0, c.x);
    b.y0 = std::min(b.y0, c.y);
    b.x1 = std::max(b.x1, c.x);
    b.y1 = std::max(b.y1, c.y);
  }
  return b;
}

// Uniform bucket grid over every footprint edge, exterior and hole alike.
class EdgeIndex {
 public:
  explicit EdgeIndex(const FootprintSet& fps) {
    double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
    double x1 = -x0, y1 = -x0;
    for (std::size_t f = 0; f < fps.size(); ++f) {
      const Polygon& p = fps.features[f].polygon;
      const auto ext = p.exterior_edges();
      for (std::size_t e = 0; e < ext.size(); ++e) segs_.push_back({ext[e], f, static_cast<int>(e)});
      for (const Segment& s : p.hole_edges()) segs_.push_back({s, f, -1});
    }
    for (const auto& t : segs_) {
      x0 = std::min({x0, t.seg.a.x, t.seg.b.x});
      y0 = std::min({y0, t.seg.a.y, t.seg.b.y});
      x1 = std::max({x1, t.seg.a.x, t.seg.b.x});
      y1 = std::max({y1, t.seg.a.y, t.seg.b.y});
    }
    if (segs_.empty()) return;
    origin_ = {x0, y0};
    const double span = std::max(x1 - x0, y1 - y0);
    cell_ = std::max(span / 256.0, 10.0);
    nx_ = static_cast<int>((x1 - x0) / cell_) + 1;
    ny_ = static_cast<int>((y1 - y0) / cell_) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t i = 0; i < segs_.size(); ++i) {
      const auto& s = segs_[i].seg;
      for_cells({std::min(s.a.x, s.b.x), std::min(s.a.y, s.b.y), std::max(s.a.x, s.b.x), std::max(s.a.y, s.b.y)},
                [&](std::size_t c) { buckets_[c].push_back(i); });
    }
  }

  const TaggedSegment& operator[](std::size_t i) const { return segs_[i]; }

  /// Indices of segments whose bounding cells meet the box, ascending.
  std::vector<std::size_t> query(const Box& b) const {
    std::vector<std::size_t> out;
    if (segs_.empty()) return out;
    for_cells(b, [&](std::size_t c) { out.insert(out.end(), buckets_[c].begin(), buckets_[c].end()); });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  template <typename F>
  void for_cells(const Box& b, F&& f) const {
    auto clampi = [](double v, int n) { return std::clamp(static_cast<int>(std::floor(v)), 0, n - 1); };
    const int cx0 = clampi((b.x0 - origin_.x) / cell_, nx_), cx1 = clampi((b.x1 - origin_.x) / cell_, nx_);
    const int cy0 = clampi((b.y0 - origin_.y) / cell_, ny_), cy1 = clampi((b.y1 - origin_.y) / cell_, ny_);
    for (int y = cy0; y <= cy1; ++y) {
      for (int x = cx0; x <= cx1; ++x) f(static_cast<std::size_t>(y) * nx_ + x);
    }
  }

  std::vector<TaggedSegment> segs_;
  std::vector<std::vector<std::size_t>> buckets_;
  Point2 origin_;
  double cell_ = 1.0;
  int nx_ = 0, ny_ = 0;
};

// Distance from `origin` along unit `dir` to the first edge of `poly` other
// than exterior edge `skip`. Infinity when the ray leaves without a hit.
double ray_depth(const Polygon& poly, int skip, Point2 origin, Point2 dir) {
  double best = std::numeric_limits<double>::infinity();
  auto test = [&](const Segment& s) {
    const Point2 e = s.b - s.a;
    const double denom = cross(dir, e);
    if (std::abs(denom) < 1e-15) return;
    const Point2 w = s.a - origin;
    const double t = cross(w, e) / denom;
    const double u = cross(w, dir) / denom;
    if (t > 1e-9 && u >= -1e-12 && u <= 1.0 + 1e-12) best = std::min(best, t);
  };
  const auto ext = poly.exterior_edges();
  for (std::size_t i = 0; i < ext.size(); ++i) {
    if (static_cast<int>(i) != skip) test(ext[i]);
  }
  for (const Segment& s : poly.hole_edges()) test(s);
  return best;
}

// How far a building extends behind its edge, sampled across the overlap.
double interior_extent(const Polygon& poly, int edge, const OrientedRect& center, double side) {
  const Point2 n = center.across();
  const Point2 dir = side * n;
  const Point2 base = center.center + (side * center.half_width) * n;
  constexpr int kSamples = 9;
  double extent = std::numeric_limits<double>::infinity();
  for (int k = 0; k < kSamples; ++k) {
    // Stay slightly inside the ends so rays do not graze the corners.
    const double f = -0.98 + 1.96 * k / (kSamples - 1);
    const Point2 origin = base + (f * center.half_length) * center.axis;
    extent = std::min(extent, ray_depth(poly, edge, origin, dir));
  }
  return extent;
}

bool outside_of(const Segment& e, Point2 p) {
  // Exteriors are counterclockwise, so the outside is to the right.
  return cross(e.b - e.a, p - e.a) < 0.0;
}

std::optional<EvaluationRegion> evaluate_edge_pair(const FootprintSet& fps, const EdgeIndex& index,
                                                   std::size_t ia, std::size_t ib, int ea, int eb,
                                                   const Segment& sa, const Segment& sb, const BuildingPair& pair,
                                                   const RegionConfig& cfg) {
  if (!segments_approx_parallel(sa, sb, cfg.angle_tol_deg)) return std::nullopt;
  const auto r = rect_between_edges(sa, sb, cfg.min_overlap);
  if (!r || r->separation > cfg.max_orth_dist || r->separation < cfg.min_separation) return std::nullopt;
  if (!outside_of(sa, r->center.center) || !outside_of(sb, r->center.center)) return std::nullopt;

  // The closed-boundary test would flag the corners where the participating
  // edges meet their neighbors, so the gap is shrunk by a hair first.
  OrientedRect probe = r->inscribed;
  const double tol = 1e-7 * (1.0 + probe.half_length + probe.half_width);
  probe.half_length -= tol;
  probe.half_width -= tol;
  if (probe.half_length <= 0.0 || probe.half_width <= 0.0) return std::nullopt;
  for (std::size_t k : index.query(rect_box(probe))) {
    const TaggedSegment& t = index[k];
    if ((t.footprint == ia && t.edge == ea) || (t.footprint == ib && t.edge == eb)) continue;
    if (rect_intersects_segment(probe, t.seg)) return std::nullopt;
  }
  // A gap swallowed whole by some other footprint crosses no edge.
  for (std::size_t f = 0; f < fps.size(); ++f) {
    if (polygon_contains(fps.features[f].polygon, probe.center)) return std::nullopt;
  }

  EvaluationRegion out;
  out.pair = pair;
  out.center = r->center;
  out.d = r->separation;
  out.overlap = r->overlap;
  out.edge_a = ea;
  out.edge_b = eb;
  const double side_a = r->first_on_negative_side ? -1.0 : 1.0;
  const Point2 n = r->center.across();
  auto building_rect = [&](std::size_t fi, int edge, double side) {
    const double extent = interior_extent(fps.features[fi].polygon, edge, r->center, side);
    const double depth = std::max(std::min(r->separation, extent), cfg.min_depth);
    OrientedRect rect;
    rect.axis = r->center.axis;
    rect.half_length = r->center.half_length;
    rect.half_width = 0.5 * depth;
    rect.center = r->center.center + (side * (r->center.half_width + 0.5 * depth)) * n;
    return rect;
  };
  out.region_a = building_rect(ia, ea, side_a);
  out.region_b = building_rect(ib, eb, -side_a);
  return out;
}

std::vector<EvaluationRegion> candidates_with_index(const BuildingPair& pair, const FootprintSet& fps,
                                                    const EdgeIndex& index, const RegionConfig& cfg) {
  const auto ia = fps.find(pair.id_a);
  const auto ib = fps.find(pair.id_b);
  if (ia < 0 || ib < 0) {
    throw Error(ErrorKind::invalid_argument, "building pair refers to an unknown footprint id");
  }
  const auto edges_a = fps.features[ia].polygon.exterior_edges();
  const auto edges_b = fps.features[ib].polygon.exterior_edges();
  std::vector<EvaluationRegion> out;
  for (std::size_t i = 0; i < edges_a.size(); ++i) {
    for (std::size_t j = 0; j < edges_b.size(); ++j) {
      auto c = evaluate_edge_pair(fps, index, ia, ib, static_cast<int>(i), static_cast<int>(j), edges_a[i],
                                  edges_b[j], pair, cfg);
      if (c) out.push_back(*c);
    }
  }
  return out;
}

// Edge indices ordered by footprint id so that swapping the pair's members
// does not change which of two tied candidates wins.
std::pair<int, int> canonical_edges(const EvaluationRegion& r) {
  return r.pair.id_a <= r.pair.id_b ? std::pair{r.edge_a, r.edge_b} : std::pair{r.edge_b, r.edge_a};
}

std::optional<EvaluationRegion> pick_best(const std::vector<EvaluationRegion>& cands) {
  const EvaluationRegion* best = nullptr;
  for (const auto& c : cands) {
    if (best == nullptr) {
      best = &c;
      continue;
    }
    const double tol = 1e-9 * (1.0 + best->d);
    if (c.d < best->d - tol) {
      best = &c;
    } else if (c.d <= best->d + tol) {
      if (c.overlap > best->overlap + 1e-9 * (1.0 + best->overlap)) {
        best = &c;
      } else if (c.overlap >= best->overlap - 1e-9 * (1.0 + best->overlap) &&
                 canonical_edges(c) < canonical_edges(*best)) {
        best = &c;
      }
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

nlohmann::json rect_json(const OrientedRect& r) {
  return {r.center.x, r.center.y, r.axis.x, r.axis.y, r.half_length, r.half_width};
}

OrientedRect rect_from_json(const nlohmann::json& j) {
  OrientedRect r;
  r.center = {j.at(0).get<double>(), j.at(1).get<double>()};
  r.axis = {j.at(2).get<double>(), j.at(3).get<double>()};
  r.half_length = j.at(4).get<double>();
  r.half_width = j.at(5).get<double>();
  return r;
}

}  // namespace

std::vector<BuildingPair> pair_buildings(const FootprintSet& fps, double max_centroid_dist) {
  struct Item {
    std::int64_t id;
    Point2 c;
  };
  std::vector<Item> items;
  items.reserve(fps.size());
  for (const auto& f : fps.features) items.push_back({f.id, polygon_centroid(f.polygon)});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.id < b.id; });

  std::vector<BuildingPair> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      const double dist = norm(items[j].c - items[i].c);
      if (dist < max_centroid_dist && dist > 0.0) out.push_back({items[i].id, items[j].id, dist});
    }
  }
  return out;
}

std::vector<EvaluationRegion> region_candidates(const BuildingPair& pair, const FootprintSet& fps,
                                                const RegionConfig& config) {
  const EdgeIndex index(fps);
  return candidates_with_index(pair, fps, index, config);
}

std::optional<EvaluationRegion> find_evaluation_region(const BuildingPair& pair, const FootprintSet& fps,
                                                       const RegionConfig& config) {
  return pick_best(region_candidates(pair, fps, config));
}

std::vector<EvaluationRegion> build_all_regions(const FootprintSet& fps, const RegionConfig& config) {
  const auto pairs = pair_buildings(fps, config.max_centroid_dist);
  const EdgeIndex index(fps);
  std::vector<std::optional<EvaluationRegion>> found(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    found[i] = pick_best(candidates_with_index(pairs[i], fps, index, config));
  }
  std::vector<EvaluationRegion> out;
  for (auto& r : found) {
    if (r) out.push_back(*r);
  }
  return out;
}

void save_regions_geojson(const std::vector<EvaluationRegion>& regions, const Crs& crs,
                          const std::filesystem::path& path) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const auto& r = regions[i];
    const std::pair<const char*, const OrientedRect*> parts[] = {
        {"center", &r.center}, {"building_a", &r.region_a}, {"building_b", &r.region_b}};
    for (const auto& [name, rect] : parts) {
      nlohmann::json props = {{"region_id", i + 1},
                              {"part", name},
                              {"id_a", r.pair.id_a},
                              {"id_b", r.pair.id_b},
                              {"centroid_distance", r.pair.centroid_distance},
                              {"d", r.d},
                              {"overlap", r.overlap},
                              {"edge_a", r.edge_a},
                              {"edge_b", r.edge_b},
                              {"rect", rect_json(*rect)}};
      features.push_back({{"type", "Feature"},
                          {"properties", std::move(props)},
                          {"geometry", polygon_geometry({rect->corners()}, crs)}});
    }
  }
  write_json_file(feature_collection(std::move(features), crs), path);
}

std::vector<EvaluationRegion> load_regions_geojson(const std::filesystem::path& path, Crs* crs) {
  const auto doc = read_json_file(path);
  try {
    if (crs != nullptr) {
      if (doc.contains("crs")) {
        *crs = Crs::parse(doc["crs"].at("properties").at("name").get<std::string>());
      } else if (doc.contains("projected_crs")) {
        *crs = Crs::parse(doc["projected_crs"].get<std::string>());
      } else {
        *crs = Crs::epsg(4326);
      }
    }
    std::vector<EvaluationRegion> out;
    std::unordered_map<std::int64_t, std::size_t> slot;
    for (const auto& f : doc.at("features")) {
      const auto& p = f.at("properties");
      const auto rid = p.at("region_id").get<std::int64_t>();
      auto [it, inserted] = slot.emplace(rid, out.size());
      if (inserted) {
        EvaluationRegion r;
        r.pair = {p.at("id_a").get<std::int64_t>(), p.at("id_b").get<std::int64_t>(),
                  p.at("centroid_distance").get<double>()};
        r.d = p.at("d").get<double>();
        r.overlap = p.at("overlap").get<double>();
        r.edge_a = p.at("edge_a").get<int>();
        r.edge_b = p.at("edge_b").get<int>();
        out.push_back(r);
      }
      EvaluationRegion& r = out[it->second];
      const auto part = p.at("part").get<std::string>();
      const OrientedRect rect = rect_from_json(p.at("rect"));
      if (part == "center") {
        r.center = rect;
      } else if (part == "building_a") {
        r.region_a = rect;
      } else if (part == "building_b") {
        r.region_b = rect;
      } else {
        throw Error(ErrorKind::parse, "unknown region part '" + part + "'");
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, "malformed regions file " + path.string() + ": " + e.what());
  }
}

}  // namespace ctf3d
