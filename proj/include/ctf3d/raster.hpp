#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ctf3d/crs.hpp"
#include "ctf3d/footprint_set.hpp"
#include "ctf3d/geom.hpp"
#include "ctf3d/pointcloud.hpp"

namespace ctf3d {

/// North-up affine georeferencing: x = origin_x + col * gsd_x,
/// y = origin_y + row * gsd_y, with (origin_x, origin_y) the upper-left corner.
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double gsd_x = 1.0;   // > 0
  double gsd_y = -1.0;  // < 0

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

inline constexpr float kDefaultNodata = -9999.0F;

/// Single-band float32 grid. Cells equal to nodata (or NaN) are invalid.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, GeoTransform transform, Crs crs, float nodata = kDefaultNodata);
  Raster(int width, int height, GeoTransform transform, Crs crs, float nodata, float fill);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  const GeoTransform& transform() const { return transform_; }
  const Crs& crs() const { return crs_; }
  float nodata() const { return nodata_; }
  double gsd() const { return transform_.gsd_x; }
  double cell_area() const { return transform_.gsd_x * -transform_.gsd_y; }

  float at(int col, int row) const { return values_[index(col, row)]; }
  float& at(int col, int row) { return values_[index(col, row)]; }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }
  bool is_valid_value(float v) const { return v == v && v != nodata_; }
  bool valid(int col, int row) const { return is_valid_value(at(col, row)); }

  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  Point2 cell_center(int col, int row) const;
  /// Continuous pixel coordinates: cell (c, r) spans [c, c+1) x [r, r+1).
  Point2 world_to_pixel(Point2 p) const;
  /// Extent as (xmin, ymin, xmax, ymax).
  std::array<double, 4> extent() const;

  bool same_grid(const Raster& other) const;
  std::size_t count_valid() const;

  /// Copy of the window [col, col+w) x [row, row+h) with adjusted transform.
  Raster crop(int col, int row, int w, int h) const;

  /// Throws if an invariant is broken (dimensions, gsd signs, non-finite data).
  void validate() const;

 private:
  int width_ = 0;
  int height_ = 0;
  GeoTransform transform_;
  Crs crs_;
  float nodata_ = kDefaultNodata;
  std::vector<float> values_;
};

/// Triangulated surface; triangles index into vertices.
struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  Crs crs;
};

/// Reads a Wavefront OBJ ("v x y z" / "f a b c ..."; polygons are fanned).
TriangleMesh load_obj_mesh(const std::string& path, const Crs& crs);

/// Grid covering the cloud's non-withheld points with one cell of padding on
/// every side; origin snapped to multiples of gsd.
Raster grid_for_cloud(const ClassifiedPointCloud& cloud, double gsd);

/// Average nominal point spacing sqrt(bbox area / N) over non-withheld
/// points, clamped below at 1e-3 m. Needs at least two points.
double estimate_anps(const ClassifiedPointCloud& cloud);

/// Max-Z gridding. Every non-withheld point is evaluated at (x +- gsd/2,
/// y +- gsd/2); each evaluation position deposits z into the cell containing
/// it, so a point touches the 2x2 block of nearest cells. Untouched cells
/// are nodata.
Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, double gsd);
/// Same rule onto a caller-supplied grid (dimensions, transform, CRS).
Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, const Raster& grid);

struct FillOptions {
  double tolerance = 1e-4;  // stop when the max per-iteration change is below this
  int max_iterations = 10000;
};

/// Min-Z gridding of ground points followed by Laplace fill of empty cells.
Raster rasterize_min_dtm(const ClassifiedPointCloud& cloud, double gsd,
                         const FillOptions& fill = {});
Raster rasterize_min_dtm(const ClassifiedPointCloud& cloud, const Raster& grid,
                         const FillOptions& fill = {});

/// Min-Z gridding of non-withheld ground points only (the DTM seeds).
Raster rasterize_min_ground(const ClassifiedPointCloud& cloud, const Raster& grid);

/// Fills every nodata cell by repeated 4-neighbor averaging. Valid cells are
/// held fixed. Throws if the raster has no valid cell.
Raster laplace_fill(const Raster& seeds, const FillOptions& fill = {});

/// Point-in-triangle sampling at cell centers, keeping the max interpolated z.
Raster rasterize_mesh(const TriangleMesh& mesh, double gsd);
Raster rasterize_mesh(const TriangleMesh& mesh, const Raster& grid);

/// Bilinear resampling of `src` onto `target`'s grid. Output takes target's
/// dimensions, transform, CRS and nodata value. Interpolations that put
/// non-zero weight on a nodata cell, or fall outside src, yield nodata.
Raster resample_to_grid(const Raster& src, const Raster& target);

/// 2x2 block mean (nodata-aware), gsd doubles. Odd trailing rows/columns are dropped.
Raster downsample2(const Raster& r);

struct TribarParams {
  double gsd = 0.25;
  double bar_width = 4.0;
  double gap = 0.5;
  double bar_height = 10.0;
  int n_bars = 3;
  int n_groups = 1;
  double gap_scale = 1.0;
  /// Per-group growth of the bar width; 1 keeps every bar at bar_width.
  double bar_scale = 1.0;
  double bar_length = 20.0;
  double margin = 8.0;  // ground between groups and around the pattern
  /// Groups wrap to a new row once a row would exceed this width (meters).
  double max_row_width = 200.0;
  /// Raster dimensions are padded to a multiple of this many cells.
  int align_cells = 16;
  double origin_x = 500000.0;
  double origin_y = 4000000.0;  // southern edge; the raster grows north from here
  std::string crs = "EPSG:32611";
};

struct Tribar {
  Raster dsm;
  FootprintSet footprints;  // exact bar rectangles, ids 1.. group by group
};

/// Synthetic resolution target: groups of n_bars raised bars on a flat floor.
/// Group g uses gap * gap_scale^g and bar_width * bar_scale^g. A cell takes
/// bar_height when its center lies inside a bar (closed), else 0.
Tribar generate_tribar(const TribarParams& params);

}  // namespace ctf3d
