#include "ctf3d/raster.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"
#include "kernel_common.hpp"

namespace ctf3d {
namespace {

constexpr int kBandRows = 32;
constexpr std::size_t kMaxCells = 100'000'000;

void check_gsd(double gsd) {
  if (!(gsd > 0.0) || !std::isfinite(gsd)) {
    throw Error(ErrorKind::invalid_argument, "gsd must be positive and finite");
  }
}

// Point indices bucketed by row band; a point whose window straddles two
// bands is listed in both.
std::vector<std::vector<std::size_t>> band_points(const ClassifiedPointCloud& cloud,
                                                  const Raster& grid, bool ground_only) {
  const int nbands = (grid.height() + kBandRows - 1) / kBandRows;
  std::vector<std::vector<std::size_t>> bands(static_cast<std::size_t>(nbands));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    if (ground_only && cloud.labels[i] != ClassLabel::ground) continue;
    const auto w = detail::point_window(grid.transform(), cloud.points[i].x, cloud.points[i].y);
    if (w.row_hi < 0 || w.row_lo >= grid.height()) continue;
    const int b0 = std::max(w.row_lo, 0) / kBandRows;
    const int b1 = std::min(w.row_hi, grid.height() - 1) / kBandRows;
    bands[b0].push_back(i);
    if (b1 != b0) bands[b1].push_back(i);
  }
  return bands;
}

template <class Better>
Raster grid_points(const ClassifiedPointCloud& cloud, const Raster& grid, bool ground_only,
                   Better better) {
  Raster out(grid.width(), grid.height(), grid.transform(), grid.crs(), grid.nodata());
  const auto bands = band_points(cloud, grid, ground_only);
  const int nbands = static_cast<int>(bands.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < nbands; ++b) {
    const int row_min = b * kBandRows;
    const int row_max = std::min(row_min + kBandRows, out.height()) - 1;
    for (std::size_t i : bands[b]) {
      const Point3& p = cloud.points[i];
      const float z = static_cast<float>(p.z);
      const auto w = detail::point_window(out.transform(), p.x, p.y);
      detail::for_window_cells(w, out.width(), out.height(), row_min, row_max, [&](int c, int r) {
        float& cell = out.at(c, r);
        if (!out.is_valid_value(cell) || better(z, cell)) cell = z;
      });
    }
  }
  return out;
}

std::size_t count_usable(const ClassifiedPointCloud& cloud, bool ground_only) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    if (ground_only && cloud.labels[i] != ClassLabel::ground) continue;
    ++n;
  }
  return n;
}

}  // namespace

Raster::Raster(int width, int height, GeoTransform transform, Crs crs, float nodata)
    : Raster(width, height, transform, std::move(crs), nodata, nodata) {}

Raster::Raster(int width, int height, GeoTransform transform, Crs crs, float nodata, float fill)
    : width_(width), height_(height), transform_(transform), crs_(std::move(crs)), nodata_(nodata) {
  if (width < 1 || height < 1) {
    throw Error(ErrorKind::invalid_argument, "raster dimensions must be at least 1x1");
  }
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) > kMaxCells) {
    throw Error(ErrorKind::invalid_argument, "raster exceeds 1e8 cells");
  }
  if (!(transform.gsd_x > 0.0) || !(transform.gsd_y < 0.0)) {
    throw Error(ErrorKind::invalid_argument, "raster must be north-up with gsd_x > 0, gsd_y < 0");
  }
  values_.assign(static_cast<std::size_t>(width) * height, fill);
}

Point2 Raster::cell_center(int col, int row) const {
  return {transform_.origin_x + (col + 0.5) * transform_.gsd_x,
          transform_.origin_y + (row + 0.5) * transform_.gsd_y};
}

Point2 Raster::world_to_pixel(Point2 p) const {
  return {(p.x - transform_.origin_x) / transform_.gsd_x,
          (p.y - transform_.origin_y) / transform_.gsd_y};
}

std::array<double, 4> Raster::extent() const {
  return {transform_.origin_x, transform_.origin_y + height_ * transform_.gsd_y,
          transform_.origin_x + width_ * transform_.gsd_x, transform_.origin_y};
}

bool Raster::same_grid(const Raster& other) const {
  return width_ == other.width_ && height_ == other.height_ && transform_ == other.transform_;
}

std::size_t Raster::count_valid() const {
  std::size_t n = 0;
  for (float v : values_) n += is_valid_value(v) ? 1 : 0;
  return n;
}

Raster Raster::crop(int col, int row, int w, int h) const {
  if (col < 0 || row < 0 || w < 1 || h < 1 || col + w > width_ || row + h > height_) {
    throw Error(ErrorKind::invalid_argument, "crop window outside raster");
  }
  GeoTransform t = transform_;
  t.origin_x += col * t.gsd_x;
  t.origin_y += row * t.gsd_y;
  Raster out(w, h, t, crs_, nodata_);
  for (int r = 0; r < h; ++r) {
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(index(col, row + r)), w,
                out.values_.begin() + static_cast<std::ptrdiff_t>(out.index(0, r)));
  }
  return out;
}

void Raster::validate() const {
  if (width_ < 1 || height_ < 1) throw Error(ErrorKind::invalid_argument, "empty raster");
  if (!(transform_.gsd_x > 0.0) || !(transform_.gsd_y < 0.0)) {
    throw Error(ErrorKind::invalid_argument, "raster must be north-up");
  }
  for (float v : values_) {
    if (v != nodata_ && v == v && !std::isfinite(v)) {
      throw Error(ErrorKind::invalid_argument, "raster holds a non-finite value");
    }
  }
}

TriangleMesh load_obj_mesh(const std::string& path, const Crs& crs) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open mesh '" + path + "'");
  TriangleMesh mesh;
  mesh.crs = crs;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    const std::uint64_t line_start = offset;
    offset += line.size() + 1;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Point3 p;
      if (!(ls >> p.x >> p.y >> p.z)) throw ParseError("bad OBJ vertex in '" + path + "'", line_start);
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const long v = std::stol(tok.substr(0, tok.find('/')));
        const long n = static_cast<long>(mesh.vertices.size());
        const long i = v > 0 ? v - 1 : n + v;
        if (i < 0 || i >= n) throw ParseError("OBJ face index out of range in '" + path + "'", line_start);
        idx.push_back(static_cast<std::uint32_t>(i));
      }
      if (idx.size() < 3) throw ParseError("OBJ face with fewer than 3 vertices", line_start);
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
  }
  return mesh;
}

Raster grid_for_cloud(const ClassifiedPointCloud& cloud, double gsd) {
  check_gsd(gsd);
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    xmin = std::min(xmin, cloud.points[i].x);
    xmax = std::max(xmax, cloud.points[i].x);
    ymin = std::min(ymin, cloud.points[i].y);
    ymax = std::max(ymax, cloud.points[i].y);
  }
  if (!(xmin <= xmax)) throw Error(ErrorKind::invalid_argument, "point cloud has no usable points");
  GeoTransform t;
  t.gsd_x = gsd;
  t.gsd_y = -gsd;
  t.origin_x = std::floor(xmin / gsd) * gsd - gsd;
  t.origin_y = std::ceil(ymax / gsd) * gsd + gsd;
  const int last_col = static_cast<int>(std::floor((xmax + 0.5 * gsd - t.origin_x) / gsd));
  const int last_row = static_cast<int>(std::floor((t.origin_y - (ymin - 0.5 * gsd)) / gsd));
  return Raster(last_col + 2, last_row + 2, t, cloud.crs);
}

double estimate_anps(const ClassifiedPointCloud& cloud) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  std::size_t n = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.withheld[i]) continue;
    ++n;
    xmin = std::min(xmin, cloud.points[i].x);
    xmax = std::max(xmax, cloud.points[i].x);
    ymin = std::min(ymin, cloud.points[i].y);
    ymax = std::max(ymax, cloud.points[i].y);
  }
  if (n < 2) throw Error(ErrorKind::invalid_argument, "ANPS needs at least two non-withheld points");
  const double area = (xmax - xmin) * (ymax - ymin);
  return std::max(std::sqrt(area / static_cast<double>(n)), 1e-3);
}

Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, double gsd) {
  if (count_usable(cloud, false) == 0) {
    throw Error(ErrorKind::invalid_argument, "DSM: cloud is empty after excluding withheld points");
  }
  return rasterize_max_dsm(cloud, grid_for_cloud(cloud, gsd));
}

Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, const Raster& grid) {
  if (count_usable(cloud, false) == 0) {
    throw Error(ErrorKind::invalid_argument, "DSM: cloud is empty after excluding withheld points");
  }
  return grid_points(cloud, grid, false, [](float z, float cur) { return z > cur; });
}

Raster rasterize_min_ground(const ClassifiedPointCloud& cloud, const Raster& grid) {
  return grid_points(cloud, grid, true, [](float z, float cur) { return z < cur; });
}

Raster rasterize_min_dtm(const ClassifiedPointCloud& cloud, double gsd, const FillOptions& fill) {
  if (count_usable(cloud, true) == 0) {
    throw Error(ErrorKind::invalid_argument, "DTM: no ground-labeled, non-withheld points");
  }
  return rasterize_min_dtm(cloud, grid_for_cloud(cloud, gsd), fill);
}

Raster rasterize_min_dtm(const ClassifiedPointCloud& cloud, const Raster& grid,
                         const FillOptions& fill) {
  if (count_usable(cloud, true) == 0) {
    throw Error(ErrorKind::invalid_argument, "DTM: no ground-labeled, non-withheld points");
  }
  const Raster seeds = rasterize_min_ground(cloud, grid);
  if (seeds.count_valid() == 0) {
    throw Error(ErrorKind::invalid_argument, "DTM: no ground point falls inside the grid");
  }
  return laplace_fill(seeds, fill);
}

Raster laplace_fill(const Raster& seeds, const FillOptions& fill) {
  const int w = seeds.width(), h = seeds.height();
  const std::size_t n = seeds.size();
  std::vector<double> cur(n, 0.0);
  std::vector<std::uint8_t> has(n, 0);
  std::vector<std::size_t> unknown;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t i = seeds.index(c, r);
      if (seeds.valid(c, r)) {
        cur[i] = seeds.at(c, r);
        has[i] = 1;
      } else {
        unknown.push_back(i);
      }
    }
  }
  if (unknown.size() == n) throw Error(ErrorKind::invalid_argument, "laplace_fill: no seed cells");

  auto neighbor_mean = [&](std::size_t i, const std::vector<double>& vals,
                           const std::vector<std::uint8_t>* mask, double& out) {
    const int c = static_cast<int>(i % w), r = static_cast<int>(i / w);
    double s = 0.0;
    int k = 0;
    const std::array<std::ptrdiff_t, 4> nb{c > 0 ? static_cast<std::ptrdiff_t>(i) - 1 : -1,
                                           c + 1 < w ? static_cast<std::ptrdiff_t>(i) + 1 : -1,
                                           r > 0 ? static_cast<std::ptrdiff_t>(i) - w : -1,
                                           r + 1 < h ? static_cast<std::ptrdiff_t>(i) + w : -1};
    for (std::ptrdiff_t j : nb) {
      if (j < 0) continue;
      if (mask != nullptr && !(*mask)[static_cast<std::size_t>(j)]) continue;
      s += vals[static_cast<std::size_t>(j)];
      ++k;
    }
    if (k == 0) return false;
    out = s / k;
    return true;
  };

  // Front propagation gives every empty cell a starting value.
  std::vector<std::size_t> pending = unknown;
  while (!pending.empty()) {
    std::vector<double> vals(pending.size());
    std::vector<std::uint8_t> got(pending.size(), 0);
    const std::ptrdiff_t np = static_cast<std::ptrdiff_t>(pending.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < np; ++k) {
      double v = 0.0;
      if (neighbor_mean(pending[k], cur, &has, v)) {
        vals[k] = v;
        got[k] = 1;
      }
    }
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (got[k]) {
        cur[pending[k]] = vals[k];
      } else {
        next.push_back(pending[k]);
      }
    }
    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (got[k]) has[pending[k]] = 1;
    }
    pending.swap(next);
  }

  // Jacobi sweeps over the originally empty cells.
  std::vector<double> nxt = cur;
  const std::ptrdiff_t nu = static_cast<std::ptrdiff_t>(unknown.size());
  for (int it = 0; it < fill.max_iterations; ++it) {
    double max_change = 0.0;
#pragma omp parallel for schedule(static) reduction(max : max_change)
    for (std::ptrdiff_t k = 0; k < nu; ++k) {
      const std::size_t i = unknown[k];
      double v = 0.0;
      neighbor_mean(i, cur, nullptr, v);
      nxt[i] = v;
      max_change = std::max(max_change, std::abs(v - cur[i]));
    }
    cur.swap(nxt);
    if (max_change < fill.tolerance) break;
  }

  Raster out(w, h, seeds.transform(), seeds.crs(), seeds.nodata());
  for (std::size_t i = 0; i < n; ++i) out.values()[i] = static_cast<float>(cur[i]);
  return out;
}

Raster rasterize_mesh(const TriangleMesh& mesh, double gsd) {
  check_gsd(gsd);
  if (mesh.vertices.empty() || mesh.triangles.empty()) {
    throw Error(ErrorKind::invalid_argument, "mesh is empty");
  }
  ClassifiedPointCloud hull;
  hull.crs = mesh.crs;
  for (const Point3& v : mesh.vertices) hull.push_back(v);
  Raster grid = grid_for_cloud(hull, gsd);
  return rasterize_mesh(mesh, grid);
}

Raster rasterize_mesh(const TriangleMesh& mesh, const Raster& grid) {
  if (mesh.triangles.empty()) throw Error(ErrorKind::invalid_argument, "mesh is empty");
  Raster out(grid.width(), grid.height(), grid.transform(), grid.crs(), grid.nodata());
  const int nbands = (out.height() + kBandRows - 1) / kBandRows;
  std::vector<detail::PreparedTriangle> tris;
  tris.reserve(mesh.triangles.size());
  std::vector<std::vector<std::size_t>> bands(static_cast<std::size_t>(nbands));
  std::size_t usable = 0;
  for (const auto& t : mesh.triangles) {
    for (std::uint32_t idx : t) {
      if (idx >= mesh.vertices.size()) throw Error(ErrorKind::invalid_argument, "mesh index out of range");
    }
    auto p = detail::prepare_triangle(out.transform(), mesh.vertices[t[0]], mesh.vertices[t[1]],
                                      mesh.vertices[t[2]]);
    if (!p.usable) continue;
    ++usable;
    if (p.row_hi < 0 || p.row_lo >= out.height() || p.col_hi < 0 || p.col_lo >= out.width() ||
        p.row_lo > p.row_hi || p.col_lo > p.col_hi) {
      continue;
    }
    const int b0 = std::max(p.row_lo, 0) / kBandRows;
    const int b1 = std::min(p.row_hi, out.height() - 1) / kBandRows;
    for (int b = b0; b <= b1; ++b) bands[b].push_back(tris.size());
    tris.push_back(p);
  }
  if (usable == 0) {
    log::warn("mesh has no horizontally projecting triangles; output is all nodata");
    return out;
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (int b = 0; b < nbands; ++b) {
    const int row_min = b * kBandRows;
    const int row_max = std::min(row_min + kBandRows, out.height()) - 1;
    for (std::size_t ti : bands[b]) {
      const auto& p = tris[ti];
      const int r0 = std::max(p.row_lo, row_min), r1 = std::min(p.row_hi, row_max);
      const int c0 = std::max(p.col_lo, 0), c1 = std::min(p.col_hi, out.width() - 1);
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          const Point2 q = out.cell_center(c, r);
          double z;
          if (!detail::triangle_sample(p, q.x, q.y, z)) continue;
          float& cell = out.at(c, r);
          const float zf = static_cast<float>(z);
          if (!out.is_valid_value(cell) || zf > cell) cell = zf;
        }
      }
    }
  }
  return out;
}

Raster resample_to_grid(const Raster& src, const Raster& target) {
  if (!(src.crs() == target.crs())) {
    throw Error(ErrorKind::invalid_argument, "resample_to_grid: CRS mismatch ('" + src.crs().id() +
                                                 "' vs '" + target.crs().id() + "')");
  }
  Raster out(target.width(), target.height(), target.transform(), target.crs(), target.nodata());
  const auto se = src.extent();
  const auto te = target.extent();
  if (se[2] <= te[0] || te[2] <= se[0] || se[3] <= te[1] || te[3] <= se[1]) {
    log::warn("resample_to_grid: source and target extents are disjoint; output is all nodata");
    return out;
  }
  const int h = out.height(), w = out.width();
#pragma omp parallel for schedule(static)
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double u, v, val;
      detail::target_to_src(src, out, c, r, u, v);
      if (detail::bilinear_sample(src, u, v, val)) out.at(c, r) = static_cast<float>(val);
    }
  }
  return out;
}

Raster downsample2(const Raster& r) {
  if (r.width() < 2 || r.height() < 2) {
    throw Error(ErrorKind::invalid_argument, "downsample2 needs at least a 2x2 raster");
  }
  GeoTransform t = r.transform();
  t.gsd_x *= 2.0;
  t.gsd_y *= 2.0;
  Raster out(r.width() / 2, r.height() / 2, t, r.crs(), r.nodata());
  const int h = out.height(), w = out.width();
#pragma omp parallel for schedule(static)
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) out.at(col, row) = detail::block_mean(r, col, row);
  }
  return out;
}

Tribar generate_tribar(const TribarParams& p) {
  check_gsd(p.gsd);
  if (!(p.bar_width > 0) || !(p.gap > 0) || !(p.bar_height > 0) || !(p.bar_length > 0) ||
      !(p.gap_scale > 0) || !(p.bar_scale > 0) || p.margin < 0 || p.n_groups < 1) {
    throw Error(ErrorKind::invalid_argument, "tribar: all dimensions must be positive");
  }
  if (p.n_bars < 2) throw Error(ErrorKind::invalid_argument, "tribar: n_bars must be >= 2");
  const Crs crs = Crs::parse(p.crs);

  struct Bar {
    double x0, x1, y0, y1;
  };
  std::vector<Bar> bars;
  const double row_pitch = std::ceil((p.bar_length + p.margin) / p.gsd) * p.gsd;
  double cursor = std::ceil(p.margin / p.gsd) * p.gsd;
  double used_width = cursor;
  int row = 0;
  for (int g = 0; g < p.n_groups; ++g) {
    const double gap = p.gap * std::pow(p.gap_scale, g);
    const double bw = p.bar_width * std::pow(p.bar_scale, g);
    const double group_width = p.n_bars * bw + (p.n_bars - 1) * gap;
    if (g > 0 && cursor + group_width + p.margin > p.max_row_width) {
      ++row;
      cursor = std::ceil(p.margin / p.gsd) * p.gsd;
    }
    const double y0 = std::ceil(p.margin / p.gsd) * p.gsd + row * row_pitch;
    double x = cursor;
    for (int b = 0; b < p.n_bars; ++b) {
      bars.push_back({x, x + bw, y0, y0 + p.bar_length});
      x += bw;
      if (b + 1 < p.n_bars) x += gap;
    }
    used_width = std::max(used_width, x);
    cursor = std::ceil((x + p.margin) / p.gsd) * p.gsd;
  }
  const double used_height = bars.back().y1 + p.margin;
  auto cells_for = [&](double extent) {
    const double cells = std::ceil(extent / p.gsd - 1e-9);
    const int a = std::max(p.align_cells, 1);
    return (static_cast<std::size_t>(cells) + a - 1) / a * a;
  };
  const std::size_t wc = cells_for(used_width + p.margin);
  const std::size_t hc = cells_for(used_height);
  if (wc * hc > kMaxCells) throw Error(ErrorKind::invalid_argument, "tribar raster exceeds 1e8 cells");

  GeoTransform t{p.origin_x, p.origin_y + static_cast<double>(hc) * p.gsd, p.gsd, -p.gsd};
  Tribar out{Raster(static_cast<int>(wc), static_cast<int>(hc), t, crs, kDefaultNodata, 0.0F), {}};
  out.footprints.crs = crs;
  const double height_local = static_cast<double>(hc) * p.gsd;
  std::int64_t id = 1;
  for (const Bar& b : bars) {
    // Cell centers in local coordinates: x = (c + 0.5) gsd, y_from_top = (r + 0.5) gsd.
    const int c0 = static_cast<int>(std::ceil(b.x0 / p.gsd - 0.5));
    const int c1 = static_cast<int>(std::floor(b.x1 / p.gsd - 0.5));
    const int r0 = static_cast<int>(std::ceil((height_local - b.y1) / p.gsd - 0.5));
    const int r1 = static_cast<int>(std::floor((height_local - b.y0) / p.gsd - 0.5));
    for (int r = std::max(r0, 0); r <= std::min(r1, out.dsm.height() - 1); ++r) {
      for (int c = std::max(c0, 0); c <= std::min(c1, out.dsm.width() - 1); ++c) {
        out.dsm.at(c, r) = static_cast<float>(p.bar_height);
      }
    }
    Footprint f;
    f.id = id++;
    f.source = FootprintSource::provided;
    f.polygon = Polygon::rectangle(p.origin_x + b.x0, p.origin_y + b.y0, p.origin_x + b.x1,
                                   p.origin_y + b.y1);
    out.footprints.features.push_back(std::move(f));
  }
  return out;
}

}  // namespace ctf3d
