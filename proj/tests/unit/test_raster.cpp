#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"
#include "ctf3d/raster.hpp"
#include "ctf3d/serial.hpp"
#include "doctest.h"

using namespace ctf3d;

namespace {

const Crs kUtm = Crs::parse("EPSG:32611");

Raster blank(int w, int h, double gsd = 1.0, double ox = 0.0, double oy = 0.0) {
  return Raster(w, h, GeoTransform{ox, oy, gsd, -gsd}, kUtm);
}

ClassifiedPointCloud random_cloud(std::mt19937& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> xy(0.0, extent), z(0.0, 30.0), u(0.0, 1.0);
  ClassifiedPointCloud c;
  c.crs = kUtm;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = u(rng);
    const ClassLabel label = r < 0.5 ? ClassLabel::ground : (r < 0.8 ? ClassLabel::building : ClassLabel::vegetation);
    c.push_back({xy(rng), xy(rng), z(rng)}, label, 1.0F, u(rng) < 0.05);
  }
  return c;
}

bool bit_equal(const Raster& a, const Raster& b) {
  if (!a.same_grid(b)) return false;
  return std::equal(a.values().begin(), a.values().end(), b.values().begin(),
                    [](float x, float y) { return std::memcmp(&x, &y, sizeof(float)) == 0; });
}

// Oracle for the DSM deposit rule: cell (c, r) receives a point when any of
// the four evaluation positions (x +- g/2, y +- g/2) falls inside the cell,
// whose extent is [x0, x0 + g) horizontally and (y0 - g, y0] vertically.
bool cell_receives(const Raster& grid, int c, int r, const Point3& p) {
  const double g = grid.gsd();
  const double x0 = grid.transform().origin_x + c * g;
  const double y0 = grid.transform().origin_y - r * g;
  for (double dx : {-0.5 * g, 0.5 * g}) {
    for (double dy : {-0.5 * g, 0.5 * g}) {
      const double ex = p.x + dx, ey = p.y + dy;
      if (ex >= x0 && ex < x0 + g && ey > y0 - g && ey <= y0) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("average nominal point spacing") {
  ClassifiedPointCloud grid_cloud;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) grid_cloud.push_back({i * 100.0 / 99.0, j * 100.0 / 99.0, 0.0});
  }
  CHECK(estimate_anps(grid_cloud) == doctest::Approx(1.0).epsilon(1e-9));

  ClassifiedPointCloud corners;
  for (auto [x, y] : {std::pair{0.0, 0.0}, {2.0, 0.0}, {2.0, 2.0}, {0.0, 2.0}}) corners.push_back({x, y, 0});
  CHECK(estimate_anps(corners) == doctest::Approx(1.0));

  ClassifiedPointCloud one;
  one.push_back({1, 1, 1});
  CHECK_THROWS_AS(estimate_anps(one), Error);

  ClassifiedPointCloud same;
  same.push_back({1, 1, 1});
  same.push_back({1, 1, 2});
  CHECK(estimate_anps(same) == doctest::Approx(1e-3));
}

TEST_CASE("max DSM deposit window") {
  const Raster grid = blank(8, 8);
  ClassifiedPointCloud c;
  c.crs = kUtm;
  const Point3 p{3.5, -4.5, 7.0};  // center of cell (3, 4)
  c.push_back(p);
  const Raster dsm = rasterize_max_dsm(c, grid);
  int touched = 0;
  for (int r = 0; r < 8; ++r) {
    for (int col = 0; col < 8; ++col) {
      const bool expect = cell_receives(grid, col, r, p);
      CHECK(dsm.valid(col, r) == expect);
      if (expect) {
        CHECK(dsm.at(col, r) == 7.0F);
        ++touched;
      }
    }
  }
  CHECK(touched == 4);

  // Random points against the brute-force oracle, including border clipping.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.4, 8.4);
  for (int i = 0; i < 200; ++i) {
    ClassifiedPointCloud one;
    const Point3 q{u(rng), -u(rng), 1.0};
    one.push_back(q);
    const Raster d = rasterize_max_dsm(one, grid);
    for (int r = 0; r < 8; ++r) {
      for (int col = 0; col < 8; ++col) REQUIRE(d.valid(col, r) == cell_receives(grid, col, r, q));
    }
  }
}

TEST_CASE("max DSM keeps the highest point and leaves gaps as nodata") {
  ClassifiedPointCloud c;
  c.crs = kUtm;
  c.push_back({2.5, -2.5, 3.0});
  c.push_back({2.5, -2.5, 7.0});
  c.push_back({2.5, -2.5, 99.0}, ClassLabel::building, 1.0F, true);  // withheld
  const Raster dsm = rasterize_max_dsm(c, blank(10, 10));
  CHECK(dsm.at(2, 2) == 7.0F);
  CHECK_FALSE(dsm.valid(8, 8));

  ClassifiedPointCloud all_withheld;
  all_withheld.push_back({0, 0, 0}, ClassLabel::ground, 1.0F, true);
  CHECK_THROWS_AS(rasterize_max_dsm(all_withheld, 1.0), Error);
}

TEST_CASE("grid for cloud pads one cell") {
  ClassifiedPointCloud c;
  c.crs = kUtm;
  c.push_back({10.2, 20.7, 0});
  c.push_back({19.9, 29.1, 0});
  const Raster g = grid_for_cloud(c, 1.0);
  const auto e = g.extent();
  CHECK(e[0] <= 10.2 - 1.0);
  CHECK(e[2] >= 19.9 + 1.0);
  CHECK(e[1] <= 20.7 - 1.0);
  CHECK(e[3] >= 29.1 + 1.0);
  CHECK(std::fmod(g.transform().origin_x, 1.0) == 0.0);
  // Every deposit lands inside the grid.
  const Raster dsm = rasterize_max_dsm(c, 1.0);
  CHECK(dsm.count_valid() == 8);
}

TEST_CASE("max DSM is invariant to point order") {
  std::mt19937 rng(9);
  ClassifiedPointCloud c = random_cloud(rng, 5000, 50.0);
  const Raster a = rasterize_max_dsm(c, 0.5);
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ClassifiedPointCloud shuffled;
  shuffled.crs = c.crs;
  for (std::size_t i : perm) shuffled.push_back(c.points[i], c.labels[i], c.confidence[i], c.withheld[i]);
  CHECK(bit_equal(a, rasterize_max_dsm(shuffled, 0.5)));
}

TEST_CASE("min DTM") {
  SUBCASE("flat ground plane") {
    ClassifiedPointCloud c;
    c.crs = kUtm;
    for (int i = 0; i < 20; i += 3) {
      for (int j = 0; j < 20; j += 3) c.push_back({i + 0.5, j + 0.5, 5.0}, ClassLabel::ground);
    }
    const Raster dtm = rasterize_min_dtm(c, 1.0);
    CHECK(dtm.count_valid() == dtm.size());
    for (float v : dtm.values()) CHECK(v == doctest::Approx(5.0).epsilon(1e-6));
  }
  SUBCASE("min rule") {
    ClassifiedPointCloud c;
    c.crs = kUtm;
    c.push_back({2.5, -2.5, 8.0}, ClassLabel::ground);
    c.push_back({2.5, -2.5, 2.0}, ClassLabel::ground);
    c.push_back({2.5, -2.5, -50.0}, ClassLabel::building);
    const Raster seeds = rasterize_min_ground(c, blank(6, 6));
    CHECK(seeds.at(2, 2) == 2.0F);
  }
  SUBCASE("fill is bounded and monotone between two seeds") {
    ClassifiedPointCloud c;
    c.crs = kUtm;
    c.push_back({0.5, 0.5, 0.0}, ClassLabel::ground);
    c.push_back({30.5, 0.5, 10.0}, ClassLabel::ground);
    const Raster dtm = rasterize_min_dtm(c, 1.0);
    CHECK(dtm.count_valid() == dtm.size());
    // Seed columns: the outermost columns holding a seed at each end.
    const Raster seeds = rasterize_min_ground(c, dtm);
    int first = dtm.width(), last = -1;
    for (int col = 0; col < dtm.width(); ++col) {
      for (int r = 0; r < dtm.height(); ++r) {
        if (seeds.valid(col, r)) {
          first = std::min(first, col);
          last = std::max(last, col);
        }
      }
    }
    for (int r = 0; r < dtm.height(); ++r) {
      for (int col = 0; col < dtm.width(); ++col) {
        CHECK(dtm.at(col, r) >= -1e-6F);
        CHECK(dtm.at(col, r) <= 10.0F + 1e-6F);
        if (col > first && col <= last) CHECK(dtm.at(col, r) >= dtm.at(col - 1, r) - 1e-5F);
      }
    }
  }
  SUBCASE("no ground points") {
    ClassifiedPointCloud c;
    c.push_back({0, 0, 0}, ClassLabel::building);
    CHECK_THROWS_AS(rasterize_min_dtm(c, 1.0), Error);
  }
}

TEST_CASE("DTM seeds never exceed the DSM maximum") {
  std::mt19937 rng(21);
  for (int t = 0; t < 5; ++t) {
    const ClassifiedPointCloud c = random_cloud(rng, 2000, 30.0);
    const Raster grid = grid_for_cloud(c, 1.0);
    const Raster seeds = rasterize_min_ground(c, grid);
    const Raster dsm = rasterize_max_dsm(c, grid);
    float seed_min = INFINITY, dsm_max = -INFINITY;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (seeds.is_valid_value(seeds.values()[i])) seed_min = std::min(seed_min, seeds.values()[i]);
      if (dsm.is_valid_value(dsm.values()[i])) dsm_max = std::max(dsm_max, dsm.values()[i]);
    }
    CHECK(seed_min <= dsm_max);
  }
}

TEST_CASE("mesh rasterization") {
  TriangleMesh flat;
  flat.crs = kUtm;
  flat.vertices = {{0, -10, 4}, {10, -10, 4}, {0, 0, 4}};
  flat.triangles = {{0, 1, 2}};
  const Raster r = rasterize_mesh(flat, blank(10, 10));
  int covered = 0;
  for (float v : r.values()) {
    if (r.is_valid_value(v)) {
      CHECK(v == 4.0F);
      ++covered;
    }
  }
  CHECK(covered >= 45);

  TriangleMesh stacked = flat;
  stacked.vertices.insert(stacked.vertices.end(), {{0, -10, 6}, {10, -10, 6}, {0, 0, 6}});
  stacked.vertices[0].z = stacked.vertices[1].z = stacked.vertices[2].z = 1;
  stacked.triangles.push_back({3, 4, 5});
  CHECK(rasterize_mesh(stacked, blank(10, 10)).at(1, 8) == 6.0F);

  // z = x plane over two triangles; cell values equal the cell-center x.
  TriangleMesh ramp;
  ramp.crs = kUtm;
  ramp.vertices = {{0, -10, 0}, {10, -10, 10}, {10, 0, 10}, {0, 0, 0}};
  ramp.triangles = {{0, 1, 2}, {0, 2, 3}};
  const Raster rr = rasterize_mesh(ramp, blank(10, 10));
  for (int row = 0; row < 10; ++row) {
    for (int col = 0; col < 10; ++col) {
      REQUIRE(rr.valid(col, row));
      CHECK(rr.at(col, row) == doctest::Approx(rr.cell_center(col, row).x).epsilon(1e-6));
    }
  }

  TriangleMesh vertical;
  vertical.crs = kUtm;
  vertical.vertices = {{1, -1, 0}, {5, -5, 0}, {5, -5, 10}};
  vertical.triangles = {{0, 1, 2}};
  log::WarningCapture warnings;
  CHECK(rasterize_mesh(vertical, blank(10, 10)).count_valid() == 0);
  CHECK(warnings.contains("no horizontally projecting"));
}

TEST_CASE("bilinear resampling") {
  Raster src = blank(20, 20);
  for (int r = 0; r < 20; ++r) {
    for (int c = 0; c < 20; ++c) src.at(c, r) = static_cast<float>(src.cell_center(c, r).x);
  }
  CHECK(bit_equal(resample_to_grid(src, src), src));

  // Half-cell offset target: the ramp is reproduced exactly.
  const Raster target = blank(15, 15, 1.0, 2.5, -2.5);
  const Raster out = resample_to_grid(src, target);
  for (int r = 0; r < 15; ++r) {
    for (int c = 0; c < 15; ++c) {
      REQUIRE(out.valid(c, r));
      CHECK(out.at(c, r) == doctest::Approx(out.cell_center(c, r).x).epsilon(1e-6));
    }
  }

  Raster constant = blank(10, 10, 1.0, 0.0, 0.0);
  std::fill(constant.values().begin(), constant.values().end(), 3.25F);
  const Raster c2 = resample_to_grid(constant, blank(13, 7, 0.7, 0.3, -0.4));
  for (float v : c2.values()) {
    if (c2.is_valid_value(v)) CHECK(v == 3.25F);
  }

  Raster holed = constant;
  holed.at(5, 5) = holed.nodata();
  const Raster h2 = resample_to_grid(holed, blank(10, 10, 1.0, 0.5, -0.5));
  CHECK_FALSE(h2.valid(4, 4));
  CHECK_FALSE(h2.valid(5, 5));
  CHECK(h2.valid(2, 2));

  log::WarningCapture warnings;
  CHECK(resample_to_grid(constant, blank(5, 5, 1.0, 1000.0, 1000.0)).count_valid() == 0);
  CHECK(warnings.contains("disjoint"));

  const Raster other(10, 10, GeoTransform{0, 0, 1, -1}, Crs::parse("EPSG:32612"));
  CHECK_THROWS_AS(resample_to_grid(constant, other), Error);
}

TEST_CASE("downsample by two") {
  Raster r = blank(2, 2);
  r.at(0, 0) = 1;
  r.at(1, 0) = 2;
  r.at(0, 1) = 3;
  r.at(1, 1) = 4;
  const Raster d = downsample2(r);
  CHECK(d.width() == 1);
  CHECK(d.at(0, 0) == 2.5F);
  CHECK(d.gsd() == 2.0);

  r.at(1, 0) = r.at(0, 1) = r.at(1, 1) = r.nodata();
  r.at(0, 0) = 5;
  CHECK(downsample2(r).at(0, 0) == 5.0F);
  r.at(0, 0) = r.nodata();
  CHECK_FALSE(downsample2(r).valid(0, 0));

  CHECK_THROWS_AS(downsample2(blank(1, 8)), Error);

  // Global mean preserved for an all-valid raster with exactly representable values.
  std::mt19937 rng(2);
  Raster big = blank(64, 32);
  double sum = 0.0;
  for (float& v : big.values()) {
    v = static_cast<float>(rng() % 4096) / 16.0F;
    sum += v;
  }
  const Raster half = downsample2(big);
  double hsum = 0.0;
  for (float v : half.values()) hsum += v;
  CHECK(std::abs(hsum / half.size() - sum / big.size()) < 1e-9);
}

TEST_CASE("tribar generator") {
  TribarParams p;  // 0.25 m cells, 4 m bars, 0.5 m gaps, 10 m high
  const Tribar t = generate_tribar(p);
  CHECK(t.footprints.size() == static_cast<std::size_t>(p.n_bars * p.n_groups));
  CHECK(t.dsm.gsd() == 0.25);
  for (float v : t.dsm.values()) CHECK((v == 0.0F || v == 10.0F));

  const double g = t.dsm.gsd();
  for (const Footprint& f : t.footprints.features) {
    const auto& ring = f.polygon.exterior();
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const Point2& q : ring) {
      x0 = std::min(x0, q.x);
      x1 = std::max(x1, q.x);
      y0 = std::min(y0, q.y);
      y1 = std::max(y1, q.y);
    }
    // Bar edges sit on cell edges.
    const Point2 lo = t.dsm.world_to_pixel({x0, y1});
    const Point2 hi = t.dsm.world_to_pixel({x1, y0});
    CHECK(std::abs(lo.x - std::round(lo.x)) < 1e-9);
    CHECK(std::abs(hi.x - std::round(hi.x)) < 1e-9);
    CHECK(std::abs(lo.y - std::round(lo.y)) < 1e-9);
    const int c0 = static_cast<int>(std::round(lo.x)), c1 = static_cast<int>(std::round(hi.x));
    const int rmid = static_cast<int>(std::round(0.5 * (lo.y + hi.y)));
    CHECK(t.dsm.at(c0, rmid) == 10.0F);
    CHECK(t.dsm.at(c1 - 1, rmid) == 10.0F);
    CHECK(t.dsm.at(c0 - 1, rmid) == 0.0F);
    CHECK(t.dsm.at(c1, rmid) == 0.0F);
  }

  TribarParams bad = p;
  bad.n_bars = 1;
  CHECK_THROWS_AS(generate_tribar(bad), Error);
  bad = p;
  bad.gsd = 0.0001;
  CHECK_THROWS_AS(generate_tribar(bad), Error);
}

TEST_CASE("tribar volume survives downsampling") {
  TribarParams p;
  p.n_groups = 4;
  p.gap_scale = 2.0;
  const Tribar t = generate_tribar(p);
  auto volume = [](const Raster& r) {
    double s = 0.0;
    for (float v : r.values()) s += v;
    return s * r.cell_area();
  };
  const double v0 = volume(t.dsm);
  Raster cur = t.dsm;
  for (int k = 0; k < 4; ++k) {
    cur = downsample2(cur);
    CHECK(std::abs(volume(cur) - v0) <= 0.005 * v0);
  }
}

TEST_CASE("parallel kernels match the serial references bit for bit") {
  std::mt19937 rng(17);
  const ClassifiedPointCloud c = random_cloud(rng, 20000, 80.0);
  const Raster grid = grid_for_cloud(c, 0.5);
  for (int threads : {1, 2, 3, 8}) {
    omp_set_num_threads(threads);
    CHECK(bit_equal(rasterize_max_dsm(c, grid), serial::rasterize_max_dsm(c, grid)));
    const Raster seeds = rasterize_min_ground(c, grid);
    CHECK(bit_equal(seeds, serial::rasterize_min_ground(c, grid)));
    const Raster sparse = rasterize_min_ground(c, grid_for_cloud(c, 0.25));
    FillOptions fill{1e-4, 300};
    CHECK(bit_equal(laplace_fill(sparse, fill), serial::laplace_fill(sparse, fill)));

    TriangleMesh mesh;
    mesh.crs = kUtm;
    std::uniform_real_distribution<double> u(0.0, 80.0), z(0.0, 20.0);
    for (int i = 0; i < 300; ++i) {
      const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
      const double x = u(rng), y = u(rng);
      mesh.vertices.push_back({x, y, z(rng)});
      mesh.vertices.push_back({x + 5 * (u(rng) / 80.0), y + 1.0, z(rng)});
      mesh.vertices.push_back({x - 3.0, y + 4 * (u(rng) / 80.0), z(rng)});
      mesh.triangles.push_back({base, base + 1, base + 2});
    }
    CHECK(bit_equal(rasterize_mesh(mesh, grid), serial::rasterize_mesh(mesh, grid)));

    const Raster dsm = rasterize_max_dsm(c, grid);
    const Raster target(grid.width() - 7, grid.height() - 5,
                        GeoTransform{grid.transform().origin_x + 1.3, grid.transform().origin_y - 0.9, 0.6, -0.6},
                        kUtm);
    CHECK(bit_equal(resample_to_grid(dsm, target), serial::resample_to_grid(dsm, target)));
    CHECK(bit_equal(downsample2(dsm), serial::downsample2(dsm)));
  }
  omp_set_num_threads(omp_get_num_procs());
}
