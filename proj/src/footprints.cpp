#include "ctf3d/footprints.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"

namespace ctf3d {
namespace {

Raster empty_mask(const Raster& grid) {
  return Raster(grid.width(), grid.height(), grid.transform(), grid.crs(), kDefaultNodata);
}

bool cell_of(const Raster& grid, const Point3& p, int& c, int& r) {
  const Point2 px = grid.world_to_pixel({p.x, p.y});
  c = static_cast<int>(std::floor(px.x));
  r = static_cast<int>(std::floor(px.y));
  return c >= 0 && r >= 0 && c < grid.width() && r < grid.height();
}

// Corner lattice point in pixel units, (col, row).
struct Corner {
  int c, r;
  friend bool operator==(Corner, Corner) = default;
  friend auto operator<=>(Corner, Corner) = default;
};

// Boundary rings of one component. Edges keep the region on the left in a
// y-up frame (x = col, y = -row); at pinch corners the left turn is taken,
// so diagonally touching cells stay in separate rings.
std::vector<std::vector<Corner>> trace_component(const std::vector<int>& label, int w, int h, int id,
                                                 const std::vector<std::size_t>& cells) {
  auto in = [&](int c, int r) { return c >= 0 && r >= 0 && c < w && r < h && label[static_cast<std::size_t>(r) * w + c] == id; };
  std::map<Corner, std::vector<Corner>> next;  // start -> ends
  std::size_t n_edges = 0;
  auto add = [&](Corner a, Corner b) {
    next[a].push_back(b);
    ++n_edges;
  };
  for (std::size_t idx : cells) {
    const int c = static_cast<int>(idx % w), r = static_cast<int>(idx / w);
    // In the y-up frame the cell spans x in [c, c+1], y in [-(r+1), -r].
    if (!in(c, r + 1)) add({c, r + 1}, {c + 1, r + 1});  // bottom, heading east
    if (!in(c + 1, r)) add({c + 1, r + 1}, {c + 1, r});  // right, heading north
    if (!in(c, r - 1)) add({c + 1, r}, {c, r});          // top, heading west
    if (!in(c - 1, r)) add({c, r}, {c, r + 1});          // left, heading south
  }

  // Direction in the y-up frame of the move a -> b.
  auto dir = [](Corner a, Corner b) { return std::pair<int, int>{b.c - a.c, -(b.r - a.r)}; };
  std::vector<std::vector<Corner>> rings;
  while (n_edges > 0) {
    auto it = next.begin();
    while (it->second.empty()) ++it;
    const Corner start = it->first;
    Corner prev = start;
    Corner cur = it->second.back();
    it->second.pop_back();
    --n_edges;
    std::vector<Corner> ring{start};
    while (!(cur == start)) {
      ring.push_back(cur);
      auto& outs = next[cur];
      std::size_t pick = 0;
      if (outs.size() > 1) {
        const auto [dx, dy] = dir(prev, cur);
        for (std::size_t k = 0; k < outs.size(); ++k) {
          const auto [ex, ey] = dir(cur, outs[k]);
          if (dx * ey - dy * ex > 0) pick = k;  // left turn
        }
      }
      prev = cur;
      cur = outs[pick];
      outs.erase(outs.begin() + static_cast<std::ptrdiff_t>(pick));
      --n_edges;
    }
    rings.push_back(std::move(ring));
  }
  return rings;
}

// Drops vertices that lie on the straight line through their neighbors.
Ring drop_collinear(const Ring& ring) {
  Ring out;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 a = ring[(i + n - 1) % n], b = ring[i], c = ring[(i + 1) % n];
    if (cross(b - a, c - b) != 0.0) out.push_back(b);
  }
  return out.size() >= 3 ? out : ring;
}

}  // namespace

BinaryGrid mask_cells(const Raster& mask) {
  BinaryGrid g(mask.width(), mask.height());
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) g.at(c, r) = mask.valid(c, r) && mask.at(c, r) == 1.0F ? 1 : 0;
  }
  return g;
}

MaskPair build_masks(const ClassifiedPointCloud& cloud, const Raster& ref_grid, double conf_threshold) {
  if (!cloud.crs.empty() && !ref_grid.crs().empty() && !(cloud.crs == ref_grid.crs())) {
    throw Error(ErrorKind::invalid_argument, "build_masks: cloud CRS '" + cloud.crs.id() +
                                                 "' differs from grid CRS '" + ref_grid.crs().id() + "'");
  }
  MaskPair m{empty_mask(ref_grid), empty_mask(ref_grid)};
  BinaryGrid building(ref_grid.width(), ref_grid.height());
  std::vector<std::uint8_t> seen(ref_grid.size(), 0);
  std::size_t n_building = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    int c, r;
    if (!cell_of(ref_grid, cloud.points[i], c, r)) continue;
    seen[ref_grid.index(c, r)] = 1;
    if (cloud.labels[i] == ClassLabel::ground) m.ground.at(c, r) = 1.0F;
    if (cloud.labels[i] == ClassLabel::building && cloud.confidence[i] >= conf_threshold) {
      building.at(c, r) = 1;
      ++n_building;
    }
  }
  if (n_building == 0) log::warn("build_masks: no building points at or above the confidence threshold");
  building = open3(close3(building));
  for (int r = 0; r < ref_grid.height(); ++r) {
    for (int c = 0; c < ref_grid.width(); ++c) {
      const std::size_t i = ref_grid.index(c, r);
      if (seen[i] && m.ground.at(c, r) != 1.0F) m.ground.at(c, r) = 0.0F;
      if (building.at(c, r)) {
        m.building.at(c, r) = 1.0F;
      } else if (seen[i]) {
        m.building.at(c, r) = 0.0F;
      }
    }
  }
  return m;
}

FootprintSet polygonize_mask(const Raster& mask, const PolygonizeOptions& options) {
  const int w = mask.width(), h = mask.height();
  const BinaryGrid on = mask_cells(mask);
  std::vector<int> label(mask.size(), 0);
  std::vector<std::vector<std::size_t>> components;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t seed = mask.index(c, r);
      if (!on.at(c, r) || label[seed] != 0) continue;
      const int id = static_cast<int>(components.size()) + 1;
      std::vector<std::size_t> cells{seed};
      label[seed] = id;
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const int cc = static_cast<int>(cells[k] % w), rr = static_cast<int>(cells[k] / w);
        const int nb[4][2] = {{cc - 1, rr}, {cc + 1, rr}, {cc, rr - 1}, {cc, rr + 1}};
        for (const auto& q : nb) {
          if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h || !on.at(q[0], q[1])) continue;
          const std::size_t j = mask.index(q[0], q[1]);
          if (label[j] == 0) {
            label[j] = id;
            cells.push_back(j);
          }
        }
      }
      components.push_back(std::move(cells));
    }
  }

  const double eps = options.dp_epsilon < 0.0 ? mask.gsd() : options.dp_epsilon;
  const GeoTransform& t = mask.transform();
  std::vector<std::optional<Polygon>> polys(components.size());
  const int ncomp = static_cast<int>(components.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < ncomp; ++k) {
    const auto rings = trace_component(label, w, h, k + 1, components[static_cast<std::size_t>(k)]);
    std::vector<Ring> world;
    for (const auto& ring : rings) {
      Ring rw;
      rw.reserve(ring.size());
      for (const Corner& q : ring) rw.push_back({t.origin_x + q.c * t.gsd_x, t.origin_y + q.r * t.gsd_y});
      world.push_back(drop_collinear(rw));
    }
    // The exterior is the only counterclockwise ring.
    std::size_t ext = 0;
    for (std::size_t i = 0; i < world.size(); ++i) {
      if (ring_signed_area(world[i]) > ring_signed_area(world[ext])) ext = i;
    }
    auto build = [&](bool simplify) -> std::optional<Polygon> {
      std::vector<Ring> holes;
      for (std::size_t i = 0; i < world.size(); ++i) {
        if (i == ext) continue;
        holes.push_back(simplify ? simplify_dp(world[i], eps) : world[i]);
      }
      try {
        return Polygon::make(simplify ? simplify_dp(world[ext], eps) : world[ext], std::move(holes));
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    std::optional<Polygon> p = options.simplify ? build(true) : std::nullopt;
    if (!p) p = build(false);
    polys[static_cast<std::size_t>(k)] = std::move(p);
  }

  FootprintSet out;
  out.crs = mask.crs();
  std::int64_t next_id = 1;
  for (auto& p : polys) {
    if (!p || polygon_area(*p) < options.min_area) continue;
    Footprint f;
    f.id = next_id++;
    f.polygon = std::move(*p);
    f.source = FootprintSource::lidar;
    out.features.push_back(std::move(f));
  }
  return out;
}

namespace {

// Cells whose centers the footprint covers (closed boundary).
std::vector<std::pair<int, int>> covered_cells(const Polygon& poly, const Raster& grid) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const Point2& p : poly.exterior()) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const Point2 a = grid.world_to_pixel({xmin, ymax});
  const Point2 b = grid.world_to_pixel({xmax, ymin});
  const int c0 = static_cast<int>(std::floor(a.x)) - 1, c1 = static_cast<int>(std::ceil(b.x)) + 1;
  const int r0 = static_cast<int>(std::floor(a.y)) - 1, r1 = static_cast<int>(std::ceil(b.y)) + 1;
  std::vector<std::pair<int, int>> cells;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (polygon_contains(poly, grid.cell_center(c, r))) cells.emplace_back(c, r);
    }
  }
  return cells;
}

struct Score {
  long score = 0;
  long valid = 0;
};

Score score_cells(const std::vector<std::pair<int, int>>& cells, const MaskPair& m, int dc, int dr) {
  Score s;
  for (const auto& [c0, r0] : cells) {
    const int c = c0 + dc, r = r0 + dr;
    if (c < 0 || r < 0 || c >= m.ground.width() || r >= m.ground.height()) continue;
    const bool gv = m.ground.valid(c, r), bv = m.building.valid(c, r);
    if (gv || bv) ++s.valid;
    if (gv && m.ground.at(c, r) == 1.0F) ++s.score;
    if (bv && m.building.at(c, r) == 1.0F) --s.score;
  }
  return s;
}

}  // namespace

long footprint_score(const Footprint& fp, const MaskPair& masks, int shift_col, int shift_row) {
  return score_cells(covered_cells(fp.polygon, masks.ground), masks, shift_col, shift_row).score;
}

FootprintSet align_footprints(const FootprintSet& fps, const MaskPair& masks, int search_radius_px) {
  if (search_radius_px < 0) throw Error(ErrorKind::invalid_argument, "search radius must be >= 0");
  if (!masks.ground.same_grid(masks.building)) {
    throw Error(ErrorKind::invalid_argument, "align_footprints: masks are not on the same grid");
  }
  if (!fps.crs.empty() && !masks.ground.crs().empty() && !(fps.crs == masks.ground.crs())) {
    throw Error(ErrorKind::invalid_argument, "align_footprints: footprint CRS differs from mask CRS");
  }
  // Candidate shifts ordered by |t|^2, then row-major; the first minimum wins.
  std::vector<std::pair<int, int>> shifts;
  const int rad = search_radius_px;
  for (int dr = -rad; dr <= rad; ++dr) {
    for (int dc = -rad; dc <= rad; ++dc) {
      if (dc * dc + dr * dr <= rad * rad) shifts.emplace_back(dc, dr);
    }
  }
  std::stable_sort(shifts.begin(), shifts.end(), [](auto a, auto b) {
    return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
  });

  FootprintSet out = fps;
  const GeoTransform& t = masks.ground.transform();
  const int n = static_cast<int>(out.features.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < n; ++i) {
    Footprint& f = out.features[static_cast<std::size_t>(i)];
    const auto cells = covered_cells(f.polygon, masks.ground);
    long best = 0;
    long total_valid = 0;
    std::pair<int, int> best_shift{0, 0};
    bool have = false;
    for (const auto& [dc, dr] : shifts) {
      const Score s = score_cells(cells, masks, dc, dr);
      total_valid += s.valid;
      if (!have || s.score < best) {
        best = s.score;
        best_shift = {dc, dr};
        have = true;
      }
    }
    if (total_valid == 0) {
      f.alignment_flagged = true;
      continue;
    }
    const Point2 shift{best_shift.first * t.gsd_x, best_shift.second * t.gsd_y};
    if (best_shift.first != 0 || best_shift.second != 0) f.polygon = f.polygon.translated(shift);
    f.alignment_shift = f.alignment_shift + shift;
  }
  for (const Footprint& f : out.features) {
    if (f.alignment_flagged) log::warn("footprint " + std::to_string(f.id) + " has no mask data under it; left in place");
  }
  return out;
}

}  // namespace ctf3d
