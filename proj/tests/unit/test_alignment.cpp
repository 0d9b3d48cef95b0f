#include <cmath>
#include <random>

#include "ctf3d/alignment.hpp"
#include "ctf3d/error.hpp"
#include "doctest.h"
#include "scene.hpp"

using namespace ctf3d;

namespace {

// Smooth bump used for subpixel checks.
double bump(double x, double y) {
  const double a = (x - 30.0) / 6.0, b = (y + 34.0) / 9.0;
  return 10.0 * std::exp(-(a * a + b * b)) + 4.0 * std::exp(-((x - 45) * (x - 45) + (y + 20) * (y + 20)) / 30.0);
}

// Bilinear warp of a raster by a fractional pixel offset: out(c, r) = in(c - du, r - dv).
Raster warp(const Raster& in, double du, double dv) {
  Raster out = in;
  for (int r = 0; r < in.height(); ++r) {
    for (int c = 0; c < in.width(); ++c) {
      const double u = std::clamp(c - du, 0.0, in.width() - 1.0);
      const double v = std::clamp(r - dv, 0.0, in.height() - 1.0);
      const int i = std::min(static_cast<int>(u), in.width() - 2);
      const int j = std::min(static_cast<int>(v), in.height() - 2);
      const double fu = u - i, fv = v - j;
      out.at(c, r) = static_cast<float>((1 - fu) * (1 - fv) * in.at(i, j) + fu * (1 - fv) * in.at(i + 1, j) +
                                        (1 - fu) * fv * in.at(i, j + 1) + fu * fv * in.at(i + 1, j + 1));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("phase correlation of identical tiles") {
  const auto city = scene::random_city(1, 64, 6);
  const Raster t = scene::sample(city, 64, 64, 1.0);
  const PhaseCorrelation pc = phase_correlate(t, t);
  CHECK(std::abs(pc.dx_px) < 1e-9);
  CHECK(std::abs(pc.dy_px) < 1e-9);
  CHECK_FALSE(pc.low_confidence);
}

TEST_CASE("phase correlation recovers integer shifts with the correction sign") {
  const auto city = scene::random_city(2, 128, 10);
  const Raster ref = scene::sample(city, 128, 128, 1.0);
  const Raster right3 = scene::sample(city, 128, 128, 1.0, 3.0, 0.0);
  const PhaseCorrelation pc = phase_correlate(right3, ref);
  CHECK(pc.dx_px == doctest::Approx(-3.0).epsilon(0.05));
  CHECK(std::abs(pc.dy_px) < 0.1);

  // Moving the test north by 2 m is two rows up; the correction is +2 rows.
  const Raster north2 = scene::sample(city, 128, 128, 1.0, 0.0, 2.0);
  const PhaseCorrelation pn = phase_correlate(north2, ref);
  CHECK(pn.dy_px == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("phase correlation subpixel refinement") {
  const Raster ref = scene::sample(bump, 64, 64, 1.0);
  const Raster half = warp(ref, 0.5, 0.0);
  const PhaseCorrelation pc = phase_correlate(half, ref);
  CHECK(std::abs(pc.dx_px - (-0.5)) < 0.2);
  CHECK(std::abs(pc.dy_px) < 0.2);
}

TEST_CASE("phase correlation antisymmetry") {
  for (unsigned seed = 3; seed < 8; ++seed) {
    const auto city = scene::random_city(seed, 96, 8);
    const Raster a = scene::sample(city, 96, 96, 1.0);
    const Raster b = scene::sample(city, 96, 96, 1.0, 1.7, -2.2);
    const PhaseCorrelation ab = phase_correlate(a, b), ba = phase_correlate(b, a);
    CHECK(std::abs(ab.dx_px + ba.dx_px) < 0.2);
    CHECK(std::abs(ab.dy_px + ba.dy_px) < 0.2);
  }
}

TEST_CASE("constant tiles are flagged") {
  Raster flat(32, 32, GeoTransform{0, 0, 1, -1}, Crs::parse("EPSG:32611"), kDefaultNodata, 7.0F);
  const PhaseCorrelation pc = phase_correlate(flat, flat);
  CHECK(pc.low_confidence);
  CHECK(pc.dx_px == 0.0);
  CHECK(pc.dy_px == 0.0);
}

TEST_CASE("global alignment") {
  const auto city = scene::random_city(11, 256, 40);
  const Raster ref = scene::sample(city, 256, 256, 1.0);
  AlignOptions opt;
  opt.window_px = 64;

  SUBCASE("identity") {
    const GlobalAlignment a = global_align(ref, ref, opt);
    CHECK(std::abs(a.dx) < 1e-9);
    CHECK(std::abs(a.dy) < 1e-9);
    CHECK(std::abs(a.dz) < 1e-9);
    CHECK(a.windows.size() == 16);
  }
  SUBCASE("rigid shift of (+2, -1) cells and +0.5 m") {
    const Raster test = scene::sample(city, 256, 256, 1.0, 2.0, -1.0, 0.5);
    const GlobalAlignment a = global_align(test, ref, opt);
    CHECK(a.dx == doctest::Approx(-2.0).epsilon(0.05));
    CHECK(a.dy == doctest::Approx(1.0).epsilon(0.1));
    CHECK(a.dz == doctest::Approx(-0.5).epsilon(0.02));

    const Raster fixed = apply_alignment(test, a);
    const GlobalAlignment residual = global_align(fixed, ref, opt);
    CHECK(std::abs(residual.dx) < 0.25);
    CHECK(std::abs(residual.dy) < 0.25);
    CHECK(std::abs(residual.dz) < 0.05);
  }
  SUBCASE("invariant to a constant added to both rasters") {
    const Raster test = scene::sample(city, 256, 256, 1.0, 2.0, -1.0, 0.5);
    const GlobalAlignment a = global_align(test, ref, opt);
    const Raster test_up = scene::sample(city, 256, 256, 1.0, 2.0, -1.0, 0.5 + 16.0);
    const Raster ref_up = scene::sample(city, 256, 256, 1.0, 0.0, 0.0, 16.0);
    const GlobalAlignment b = global_align(test_up, ref_up, opt);
    CHECK(std::abs(a.dx - b.dx) < 1e-3);
    CHECK(std::abs(a.dy - b.dy) < 1e-3);
    CHECK(std::abs(a.dz - b.dz) < 1e-3);
  }
  SUBCASE("median resists a minority of corrupted windows") {
    const Raster test = scene::sample(city, 256, 256, 1.0, 2.0, -1.0, 0.5);
    Raster corrupted = test;
    // Replace 7 of 16 windows with content shifted by a large, different amount.
    const Raster wild = scene::sample(city, 256, 256, 1.0, -9.0, 7.0, 3.0);
    for (int k = 0; k < 7; ++k) {
      const int c0 = (k % 4) * 64, r0 = (k / 4) * 64;
      for (int r = r0; r < r0 + 64; ++r) {
        for (int c = c0; c < c0 + 64; ++c) corrupted.at(c, r) = wild.at(c, r);
      }
    }
    const GlobalAlignment clean = global_align(test, ref, opt);
    const GlobalAlignment dirty = global_align(corrupted, ref, opt);
    CHECK(std::abs(clean.dx - dirty.dx) < 1.0);
    CHECK(std::abs(clean.dy - dirty.dy) < 1.0);
  }
  SUBCASE("no acceptable window") {
    Raster holes = ref;
    for (int r = 0; r < 256; r += 4) {
      for (int c = 0; c < 256; ++c) holes.at(c, r) = holes.nodata();
    }
    CHECK_THROWS_AS(global_align(holes, ref, opt), Error);
  }
}

TEST_CASE("apply alignment") {
  Raster flat(16, 16, GeoTransform{0, 0, 1, -1}, Crs::parse("EPSG:32611"), kDefaultNodata, 5.0F);
  GlobalAlignment zero;
  const Raster same = apply_alignment(flat, zero);
  CHECK(std::equal(same.values().begin(), same.values().end(), flat.values().begin()));
  GlobalAlignment up;
  up.dz = 1.0;
  const Raster raised = apply_alignment(flat, up);
  for (float v : raised.values()) CHECK(v == 6.0F);
}

TEST_CASE("alignment report round trip") {
  GlobalAlignment a;
  a.dx = -1.187;
  a.dy = 0.547;
  a.dz = 0.005;
  a.window_px = 512;
  a.windows.push_back({0, 512, -1.2, 0.5, 0.01, 0.97, true, false});
  const GlobalAlignment b = alignment_from_json(alignment_to_json(a));
  CHECK(b.dx == a.dx);
  CHECK(b.dy == a.dy);
  CHECK(b.dz == a.dz);
  REQUIRE(b.windows.size() == 1);
  CHECK(b.windows[0].row == 512);
  CHECK(b.windows[0].valid_fraction == 0.97);
}
