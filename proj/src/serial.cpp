#include "ctf3d/serial.hpp"

#include <algorithm>
#include <cmath>

#include "ctf3d/error.hpp"
#include "kernel_common.hpp"

namespace ctf3d::serial {
namespace {

template <class Better>
Raster grid_points(const ClassifiedPointCloud& cloud, const Raster& grid, bool ground_only,
                   Better better) {
  Raster out(grid.width(), grid.height(), grid.transform(), grid.crs(), grid.nodata());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    if (ground_only && cloud.labels[i] != ClassLabel::ground) continue;
    const float z = static_cast<float>(cloud.points[i].z);
    const auto w = detail::point_window(out.transform(), cloud.points[i].x, cloud.points[i].y);
    detail::for_window_cells(w, out.width(), out.height(), 0, out.height() - 1, [&](int c, int r) {
      float& cell = out.at(c, r);
      if (!out.is_valid_value(cell) || better(z, cell)) cell = z;
    });
  }
  return out;
}

}  // namespace

Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, const Raster& grid) {
  return grid_points(cloud, grid, false, [](float z, float cur) { return z > cur; });
}

Raster rasterize_min_ground(const ClassifiedPointCloud& cloud, const Raster& grid) {
  return grid_points(cloud, grid, true, [](float z, float cur) { return z < cur; });
}

Raster laplace_fill(const Raster& seeds, const FillOptions& fill) {
  const int w = seeds.width(), h = seeds.height();
  std::vector<double> cur(seeds.size(), 0.0);
  std::vector<std::uint8_t> fixed(seeds.size(), 0), has(seeds.size(), 0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (seeds.valid(c, r)) {
        cur[seeds.index(c, r)] = seeds.at(c, r);
        fixed[seeds.index(c, r)] = has[seeds.index(c, r)] = 1;
      }
    }
  }
  if (seeds.count_valid() == 0) throw Error(ErrorKind::invalid_argument, "laplace_fill: no seed cells");

  auto mean_of = [&](int c, int r, const std::vector<double>& v, const std::uint8_t* mask,
                     double& out) {
    double s = 0.0;
    int k = 0;
    auto take = [&](int cc, int rr) {
      const std::size_t j = static_cast<std::size_t>(rr) * w + cc;
      if (mask != nullptr && !mask[j]) return;
      s += v[j];
      ++k;
    };
    if (c > 0) take(c - 1, r);
    if (c + 1 < w) take(c + 1, r);
    if (r > 0) take(c, r - 1);
    if (r + 1 < h) take(c, r + 1);
    if (k == 0) return false;
    out = s / k;
    return true;
  };

  bool missing = true;
  while (missing) {
    missing = false;
    std::vector<std::uint8_t> has_next = has;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        if (has[i]) continue;
        double v = 0.0;
        if (mean_of(c, r, cur, has.data(), v)) {
          cur[i] = v;
          has_next[i] = 1;
        } else {
          missing = true;
        }
      }
    }
    has.swap(has_next);
  }

  std::vector<double> nxt = cur;
  for (int it = 0; it < fill.max_iterations; ++it) {
    double max_change = 0.0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        if (fixed[i]) continue;
        double v = 0.0;
        mean_of(c, r, cur, nullptr, v);
        nxt[i] = v;
        max_change = std::max(max_change, std::abs(v - cur[i]));
      }
    }
    cur.swap(nxt);
    if (max_change < fill.tolerance) break;
  }

  Raster out(w, h, seeds.transform(), seeds.crs(), seeds.nodata());
  for (std::size_t i = 0; i < seeds.size(); ++i) out.values()[i] = static_cast<float>(cur[i]);
  return out;
}

Raster rasterize_mesh(const TriangleMesh& mesh, const Raster& grid) {
  Raster out(grid.width(), grid.height(), grid.transform(), grid.crs(), grid.nodata());
  for (const auto& t : mesh.triangles) {
    const auto p = detail::prepare_triangle(out.transform(), mesh.vertices[t[0]],
                                            mesh.vertices[t[1]], mesh.vertices[t[2]]);
    if (!p.usable) continue;
    for (int r = std::max(p.row_lo, 0); r <= std::min(p.row_hi, out.height() - 1); ++r) {
      for (int c = std::max(p.col_lo, 0); c <= std::min(p.col_hi, out.width() - 1); ++c) {
        const Point2 q = out.cell_center(c, r);
        double z;
        if (!detail::triangle_sample(p, q.x, q.y, z)) continue;
        const float zf = static_cast<float>(z);
        float& cell = out.at(c, r);
        if (!out.is_valid_value(cell) || zf > cell) cell = zf;
      }
    }
  }
  return out;
}

Raster resample_to_grid(const Raster& src, const Raster& target) {
  Raster out(target.width(), target.height(), target.transform(), target.crs(), target.nodata());
  for (int r = 0; r < out.height(); ++r) {
    for (int c = 0; c < out.width(); ++c) {
      double u, v, val;
      detail::target_to_src(src, out, c, r, u, v);
      if (detail::bilinear_sample(src, u, v, val)) out.at(c, r) = static_cast<float>(val);
    }
  }
  return out;
}

Raster downsample2(const Raster& r) {
  GeoTransform t = r.transform();
  t.gsd_x *= 2.0;
  t.gsd_y *= 2.0;
  Raster out(r.width() / 2, r.height() / 2, t, r.crs(), r.nodata());
  for (int row = 0; row < out.height(); ++row) {
    for (int col = 0; col < out.width(); ++col) out.at(col, row) = detail::block_mean(r, col, row);
  }
  return out;
}

BinaryGrid dilate3(const BinaryGrid& g) {
  BinaryGrid out(g.width, g.height);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      std::uint8_t v = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (g.inside(c + dc, r + dr) && g.at(c + dc, r + dr)) v = 1;
        }
      }
      out.at(c, r) = v;
    }
  }
  return out;
}

BinaryGrid erode3(const BinaryGrid& g) {
  BinaryGrid out(g.width, g.height);
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      std::uint8_t v = 1;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (g.inside(c + dc, r + dr) && !g.at(c + dc, r + dr)) v = 0;
        }
      }
      out.at(c, r) = v;
    }
  }
  return out;
}

}  // namespace ctf3d::serial
