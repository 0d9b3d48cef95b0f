#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <tuple>

#include "ctf3d/raster.hpp"
#include "ctf3d/regions.hpp"
#include "doctest.h"
#include "region_oracle.hpp"

using namespace ctf3d;
using namespace region_oracle;

namespace {

Point2 rotate(Point2 p, double ang) {
  const double c = std::cos(ang), s = std::sin(ang);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

FootprintSet transformed(const FootprintSet& fps, double ang, Point2 shift) {
  FootprintSet out = fps;
  for (auto& f : out.features) {
    Ring ext;
    for (Point2 p : f.polygon.exterior()) ext.push_back(rotate(p, ang) + shift);
    std::vector<Ring> holes;
    for (const auto& h : f.polygon.holes()) {
      Ring r;
      for (Point2 p : h) r.push_back(rotate(p, ang) + shift);
      holes.push_back(r);
    }
    f.polygon = Polygon::make(ext, holes);
  }
  return out;
}

void check_region_invariants(const EvaluationRegion& r, const FootprintSet& fps, const RegionConfig& cfg) {
  CHECK(r.d > 0);
  CHECK(r.d <= cfg.max_orth_dist);
  CHECK(r.overlap >= cfg.min_overlap);
  CHECK(r.pair.id_a < r.pair.id_b);
  CHECK_FALSE(interiors_overlap(r.center, r.region_a));
  CHECK_FALSE(interiors_overlap(r.center, r.region_b));
  CHECK_FALSE(interiors_overlap(r.region_a, r.region_b));
  CHECK(std::abs(std::abs(dot(r.region_a.axis, r.center.axis)) - 1.0) < 1e-12);
  CHECK(r.region_a.half_length == doctest::Approx(r.center.half_length));
  CHECK(r.region_b.half_length == doctest::Approx(r.center.half_length));
  // Opposite sides of the center.
  const double sa = dot(r.region_a.center - r.center.center, r.center.across());
  const double sb = dot(r.region_b.center - r.center.center, r.center.across());
  CHECK(sa * sb < 0);
  // Brute force: no footprint edge sample falls inside the center.
  CHECK_FALSE(center_hit_by_edge(r, fps));
}

}  // namespace

TEST_CASE("building pairs") {
  const auto three = make_set({rect(0, 0, 10, 10), rect(20, 0, 30, 10), rect(0, 20, 10, 30)});
  CHECK(pair_buildings(three, 150).size() == 3);
  const auto far = make_set({rect(0, 0, 10, 10), rect(100, 0, 110, 10)});
  CHECK(pair_buildings(far, 50).empty());
  CHECK(pair_buildings(make_set({rect(0, 0, 10, 10)}), 150).empty());

  std::mt19937 rng(13);
  std::uniform_real_distribution<double> pos(0, 500);
  std::vector<Polygon> polys;
  for (int i = 0; i < 50; ++i) {
    const double x = pos(rng), y = pos(rng);
    polys.push_back(rect(x, y, x + 5 + i % 7, y + 4 + i % 5));
  }
  FootprintSet fps = make_set(polys);
  // Shuffle ids so sorting is exercised.
  std::vector<std::int64_t> ids(50);
  for (int i = 0; i < 50; ++i) ids[i] = 1000 - 7 * i;
  std::shuffle(ids.begin(), ids.end(), rng);
  for (int i = 0; i < 50; ++i) fps.features[i].id = ids[i];

  std::vector<BuildingPair> brute;
  for (const auto& a : fps.features) {
    for (const auto& b : fps.features) {
      if (a.id >= b.id) continue;
      const double dist = norm(polygon_centroid(a.polygon) - polygon_centroid(b.polygon));
      if (dist < 120) brute.push_back({a.id, b.id, dist});
    }
  }
  std::sort(brute.begin(), brute.end(),
            [](const auto& x, const auto& y) { return std::tie(x.id_a, x.id_b) < std::tie(y.id_a, y.id_b); });
  CHECK(pair_buildings(fps, 120) == brute);
}

TEST_CASE("two facing squares") {
  const auto fps = make_set({rect(0, 0, 10, 10), rect(14, 0, 24, 10)});
  RegionConfig cfg;
  const auto r = find_evaluation_region({1, 2, 14}, fps, cfg);
  REQUIRE(r);
  CHECK(r->d == doctest::Approx(4.0));
  CHECK(r->overlap == doctest::Approx(10.0));
  CHECK(r->center.center.x == doctest::Approx(12.0));
  CHECK(r->center.center.y == doctest::Approx(5.0));
  CHECK(r->region_a.center.x == doctest::Approx(8.0));
  CHECK(r->region_b.center.x == doctest::Approx(16.0));
  CHECK(2 * r->region_a.half_width == doctest::Approx(4.0));
  check_region_invariants(*r, fps, cfg);

  SUBCASE("third building crossing the gap") {
    const auto blocked = make_set({rect(0, 0, 10, 10), rect(14, 0, 24, 10), rect(11, -5, 13, 15)});
    CHECK_FALSE(find_evaluation_region({1, 2, 14}, blocked, cfg));
  }
  SUBCASE("building depth is clipped to the interior") {
    const auto thin = make_set({rect(0, 0, 10, 10), rect(25, 0, 27, 10)});
    const auto t = find_evaluation_region({1, 2, 0}, thin, cfg);
    REQUIRE(t);
    CHECK(t->d == doctest::Approx(15.0));
    CHECK(2 * t->region_a.half_width == doctest::Approx(10.0));
    CHECK(2 * t->region_b.half_width == doctest::Approx(2.0));
    RegionConfig floor = cfg;
    floor.min_depth = 3.0;
    CHECK(2 * find_evaluation_region({1, 2, 0}, thin, floor)->region_b.half_width == doctest::Approx(3.0));
  }
  SUBCASE("limits") {
    RegionConfig tight = cfg;
    tight.max_orth_dist = 3.9;
    CHECK_FALSE(find_evaluation_region({1, 2, 0}, fps, tight));
    const auto offset = make_set({rect(0, 0, 10, 10), rect(14, 9, 24, 19)});
    CHECK_FALSE(find_evaluation_region({1, 2, 0}, offset, cfg));  // 1 m overlap < 2 m
  }
  SUBCASE("degenerate pairs") {
    CHECK(build_all_regions(make_set({rect(0, 0, 10, 10), rect(0, 0, 10, 10)}), cfg).empty());
    CHECK(build_all_regions(make_set({rect(0, 0, 10, 10), rect(10, 0, 20, 10)}), cfg).empty());
    CHECK(build_all_regions(make_set({rect(0, 0, 10, 10)}), cfg).empty());
  }
}

TEST_CASE("candidate enumeration matches an exhaustive oracle") {
  RegionConfig cfg;
  std::mt19937 rng(21);
  std::uniform_int_distribution<int> pos(0, 40);
  int with_region = 0;
  for (int t = 0; t < 60; ++t) {
    std::vector<Polygon> polys{l_shape(0, 0)};
    const double x = 22 + pos(rng) % 12, y = pos(rng) - 15;
    polys.push_back(t % 2 ? l_shape(x, y) : rect(x, y, x + 8, y + 6 + pos(rng) % 10));
    // Sometimes a third building that may or may not obstruct.
    if (t % 3 == 0) {
      const double ox = 11 + pos(rng) % 20, oy = pos(rng) - 10.0;
      polys.push_back(rect(ox, oy, ox + 2 + pos(rng) % 6, oy + 4 + pos(rng) % 12));
    }
    FootprintSet fps;
    try {
      fps = make_set(polys);
    } catch (...) {
      continue;
    }
    bool overlapping = false;
    for (std::size_t i = 0; i < fps.size(); ++i) {
      for (std::size_t j = 0; j < fps.size(); ++j) {
        if (i == j) continue;
        for (Point2 p : fps.features[j].polygon.exterior()) overlapping |= polygon_contains(fps.features[i].polygon, p);
      }
    }
    if (overlapping) continue;
    const BuildingPair pair{1, 2, 1};
    const auto got = region_candidates(pair, fps, cfg);
    const auto want = oracle_candidates(fps, 0, 1, cfg.max_orth_dist, cfg.min_overlap);
    REQUIRE(got.size() == want.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      CHECK(got[k].edge_a == want[k].edge_a);
      CHECK(got[k].edge_b == want[k].edge_b);
      CHECK(got[k].d == doctest::Approx(want[k].d));
      CHECK(got[k].overlap == doctest::Approx(want[k].overlap));
    }
    const auto best = find_evaluation_region(pair, fps, cfg);
    CHECK(best.has_value() == !want.empty());
    if (best) {
      ++with_region;
      double dmin = 1e300;
      for (const auto& w : want) dmin = std::min(dmin, w.d);
      CHECK(best->d == doctest::Approx(dmin));
      check_region_invariants(*best, fps, cfg);
    }
  }
  CHECK(with_region > 10);
}

TEST_CASE("L-shaped building offers two facing edges") {
  // Both inner edges of the L face the second building: the vertical one at
  // 3 m and the horizontal one at 2 m. The nearer one wins.
  const auto fps = make_set({l_shape(0, 0), rect(13, 12, 25, 30)});
  RegionConfig cfg;
  const auto cands = region_candidates({1, 2, 1}, fps, cfg);
  std::vector<double> ds;
  for (const auto& c : cands) ds.push_back(c.d);
  std::sort(ds.begin(), ds.end());
  REQUIRE(ds.size() == 2);
  CHECK(ds[1] == doctest::Approx(3.0));
  const auto best = find_evaluation_region({1, 2, 1}, fps, cfg);
  REQUIRE(best);
  CHECK(best->d == doctest::Approx(ds.front()));
  CHECK(best->d == doctest::Approx(2.0));
}

TEST_CASE("tribar regions") {
  TribarParams p;
  p.gsd = 0.1;
  p.bar_width = 2.0;
  p.gap = 0.7;
  const Tribar tb = generate_tribar(p);
  RegionConfig cfg;
  cfg.min_depth = p.gsd;
  const auto regions = build_all_regions(tb.footprints, cfg);
  REQUIRE(regions.size() == 2);
  for (const auto& r : regions) {
    CHECK(r.d == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(r.overlap == doctest::Approx(p.bar_length));
    CHECK(2 * r.region_a.half_width == doctest::Approx(0.7));
    check_region_invariants(r, tb.footprints, cfg);
  }
}

TEST_CASE("invariance under translation, rotation and swapping") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  RegionConfig cfg;
  int compared = 0;
  for (int t = 0; t < 40; ++t) {
    std::vector<Polygon> polys;
    for (int k = 0; k < 6; ++k) {
      const double x = 25 * (k % 3) + 4 * u(rng), y = 25 * (k / 3) + 4 * u(rng);
      polys.push_back(k % 2 ? l_shape(x, y) : rect(x, y, x + 8 + 6 * u(rng), y + 8 + 6 * u(rng)));
    }
    const FootprintSet fps = make_set(polys);
    const auto base = build_all_regions(fps, cfg);
    for (const auto& r : base) check_region_invariants(r, fps, cfg);

    const auto moved = build_all_regions(transformed(fps, 0.0, {654321.0, 4012345.0}), cfg);
    REQUIRE(moved.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(moved[i].d == doctest::Approx(base[i].d).epsilon(1e-9));
      CHECK(moved[i].edge_a == base[i].edge_a);
      CHECK(moved[i].edge_b == base[i].edge_b);
    }

    const double ang = 2.0 * M_PI * u(rng);
    const auto rotated = build_all_regions(transformed(fps, ang, {0, 0}), cfg);
    REQUIRE(rotated.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::abs(rotated[i].d - base[i].d) < 1e-6);
      CHECK(std::abs(rotated[i].overlap - base[i].overlap) < 1e-6);
    }

    for (const auto& r : base) {
      const auto swapped = find_evaluation_region({r.pair.id_b, r.pair.id_a, r.pair.centroid_distance}, fps, cfg);
      REQUIRE(swapped);
      CHECK(swapped->d == doctest::Approx(r.d));
      CHECK(swapped->edge_a == r.edge_b);
      CHECK(swapped->edge_b == r.edge_a);
      CHECK(norm(swapped->region_a.center - r.region_b.center) < 1e-9);
      CHECK(norm(swapped->region_b.center - r.region_a.center) < 1e-9);
      ++compared;
    }
  }
  CHECK(compared > 20);
}

TEST_CASE("regions geojson round trip") {
  const auto fps = make_set({rect(650000, 4010000, 650010, 4010010), rect(650014, 4010000, 650024, 4010010)});
  const auto regions = build_all_regions(fps, {});
  REQUIRE(regions.size() == 1);
  const auto path = std::filesystem::temp_directory_path() / "ctf3d_regions_test.geojson";
  save_regions_geojson(regions, kUtm, path);
  Crs crs;
  const auto back = load_regions_geojson(path, &crs);
  std::filesystem::remove(path);
  CHECK(crs == kUtm);
  REQUIRE(back.size() == 1);
  CHECK(back[0].d == regions[0].d);
  CHECK(back[0].pair == regions[0].pair);
  CHECK(back[0].center.center == regions[0].center.center);
  CHECK(back[0].region_b.half_width == regions[0].region_b.half_width);
}
