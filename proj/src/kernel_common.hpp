#pragma once

// Cell-index arithmetic shared by the parallel kernels and their serial
// references, so both touch exactly the same cells.

#include <algorithm>
#include <array>
#include <cmath>

#include "ctf3d/pointcloud.hpp"
#include "ctf3d/raster.hpp"

namespace ctf3d::detail {

/// Columns and rows hit by evaluating a point at +-half a cell on each axis.
struct PointWindow {
  int col_lo, col_hi;
  int row_lo, row_hi;
};

inline PointWindow point_window(const GeoTransform& t, double x, double y) {
  const double u = (x - t.origin_x) / t.gsd_x;
  const double v = (y - t.origin_y) / t.gsd_y;
  return {static_cast<int>(std::floor(u - 0.5)), static_cast<int>(std::floor(u + 0.5)),
          static_cast<int>(std::floor(v - 0.5)), static_cast<int>(std::floor(v + 0.5))};
}

/// Calls f(col, row) for every in-grid cell of a point window.
template <class F>
inline void for_window_cells(const PointWindow& w, int width, int height, int row_min, int row_max,
                             F&& f) {
  const std::array<int, 2> cols{w.col_lo, w.col_hi};
  const std::array<int, 2> rows{w.row_lo, w.row_hi};
  for (int ri = 0; ri < 2; ++ri) {
    const int r = rows[ri];
    if (ri == 1 && r == rows[0]) break;
    if (r < 0 || r >= height || r < row_min || r > row_max) continue;
    for (int ci = 0; ci < 2; ++ci) {
      const int c = cols[ci];
      if (ci == 1 && c == cols[0]) break;
      if (c < 0 || c >= width) continue;
      f(c, r);
    }
  }
}

/// Projected triangle prepared for cell-center sampling.
struct PreparedTriangle {
  double x0, y0, x1, y1, x2, y2;
  double z0, z1, z2;
  double area2;
  int col_lo, col_hi, row_lo, row_hi;
  bool usable;
};

inline PreparedTriangle prepare_triangle(const GeoTransform& t, const Point3& a, const Point3& b,
                                         const Point3& c) {
  PreparedTriangle p{};
  p.x0 = a.x; p.y0 = a.y; p.z0 = a.z;
  p.x1 = b.x; p.y1 = b.y; p.z1 = b.z;
  p.x2 = c.x; p.y2 = c.y; p.z2 = c.z;
  p.area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  const double scale = std::max({std::abs(b.x - a.x), std::abs(c.x - a.x), std::abs(b.y - a.y),
                                 std::abs(c.y - a.y)});
  p.usable = std::abs(p.area2) > 1e-12 * scale * scale;
  if (!p.usable) return p;
  const double xmin = std::min({a.x, b.x, c.x}), xmax = std::max({a.x, b.x, c.x});
  const double ymin = std::min({a.y, b.y, c.y}), ymax = std::max({a.y, b.y, c.y});
  p.col_lo = static_cast<int>(std::ceil((xmin - t.origin_x) / t.gsd_x - 0.5));
  p.col_hi = static_cast<int>(std::floor((xmax - t.origin_x) / t.gsd_x - 0.5));
  p.row_lo = static_cast<int>(std::ceil((ymax - t.origin_y) / t.gsd_y - 0.5));
  p.row_hi = static_cast<int>(std::floor((ymin - t.origin_y) / t.gsd_y - 0.5));
  return p;
}

/// Interpolated z at (x, y) when inside the closed triangle.
inline bool triangle_sample(const PreparedTriangle& p, double x, double y, double& z) {
  const double w0 = ((p.x1 - x) * (p.y2 - y) - (p.y1 - y) * (p.x2 - x)) / p.area2;
  const double w1 = ((p.x2 - x) * (p.y0 - y) - (p.y2 - y) * (p.x0 - x)) / p.area2;
  const double w2 = 1.0 - w0 - w1;
  constexpr double tol = -1e-12;
  if (w0 < tol || w1 < tol || w2 < tol) return false;
  z = w0 * p.z0 + w1 * p.z1 + w2 * p.z2;
  return true;
}

/// Bilinear sample of src at continuous center-based pixel coords (u, v).
/// Returns false when any non-zero weight lands on an invalid cell.
inline bool bilinear_sample(const Raster& src, double u, double v, double& out) {
  const int w = src.width(), h = src.height();
  if (u < -0.5 || v < -0.5 || u > w - 0.5 || v > h - 0.5) return false;
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  int i0 = static_cast<int>(std::floor(u));
  int j0 = static_cast<int>(std::floor(v));
  double tu = u - i0, tv = v - j0;
  constexpr double snap = 1e-9;
  if (tu < snap) tu = 0.0;
  if (tv < snap) tv = 0.0;
  if (tu > 1.0 - snap) { ++i0; tu = 0.0; }
  if (tv > 1.0 - snap) { ++j0; tv = 0.0; }
  i0 = std::min(i0, w - 1);
  j0 = std::min(j0, h - 1);
  const int i1 = std::min(i0 + 1, w - 1);
  const int j1 = std::min(j0 + 1, h - 1);
  const std::array<double, 4> wt{(1 - tu) * (1 - tv), tu * (1 - tv), (1 - tu) * tv, tu * tv};
  const std::array<int, 4> ci{i0, i1, i0, i1};
  const std::array<int, 4> ri{j0, j0, j1, j1};
  double acc = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (wt[k] == 0.0) continue;
    const float val = src.at(ci[k], ri[k]);
    if (!src.is_valid_value(val)) return false;
    acc += wt[k] * static_cast<double>(val);
  }
  out = acc;
  return true;
}

/// Target cell (col,row) expressed in src's center-based pixel coordinates.
inline void target_to_src(const Raster& src, const Raster& target, int col, int row, double& u,
                          double& v) {
  const Point2 c = target.cell_center(col, row);
  u = (c.x - src.transform().origin_x) / src.transform().gsd_x - 0.5;
  v = (c.y - src.transform().origin_y) / src.transform().gsd_y - 0.5;
}

inline float block_mean(const Raster& r, int col2, int row2) {
  double sum = 0.0;
  int n = 0;
  for (int dr = 0; dr < 2; ++dr) {
    for (int dc = 0; dc < 2; ++dc) {
      const float v = r.at(2 * col2 + dc, 2 * row2 + dr);
      if (r.is_valid_value(v)) {
        sum += v;
        ++n;
      }
    }
  }
  return n == 0 ? r.nodata() : static_cast<float>(sum / n);
}

}  // namespace ctf3d::detail
