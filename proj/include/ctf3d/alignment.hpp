#pragma once

#include <string>
#include <vector>

#include "ctf3d/raster.hpp"
#include "json.hpp"

namespace ctf3d {

struct PhaseCorrelation {
  double dx_px = 0.0;  // columns; correction to apply to the test tile
  double dy_px = 0.0;  // rows, positive down
  double peak = 0.0;   // height of the normalized correlation peak
  bool low_confidence = false;
};

/// Translation between two equally sized tiles from the normalized
/// cross-power spectrum. Nodata cells are replaced by the tile mean and both
/// tiles are Hann-windowed before the transform; the integer peak is refined
/// by a three-point parabola on each axis. Constant tiles give a zero offset
/// flagged low-confidence.
PhaseCorrelation phase_correlate(const Raster& test_tile, const Raster& ref_tile);

struct WindowAlignment {
  int col = 0;  // window origin in pixels
  int row = 0;
  double dx = 0.0;  // meters
  double dy = 0.0;
  double dz = 0.0;
  double valid_fraction = 0.0;  // min over test and ref
  bool accepted = false;
  bool low_confidence = false;
};

struct GlobalAlignment {
  double dx = 0.0;  // meters, easting correction to apply to the test data
  double dy = 0.0;  // meters, northing correction
  double dz = 0.0;  // meters, vertical correction
  int window_px = 0;
  std::vector<WindowAlignment> windows;  // row-major window order
  bool manual = false;
};

struct AlignOptions {
  int window_px = 512;
  double valid_frac_min = 0.95;
};

/// Tiles the common grid into non-overlapping windows and takes medians of
/// the per-window corrections. dz in each window is the median of
/// ref - test after the window's horizontal correction is applied.
GlobalAlignment global_align(const Raster& test, const Raster& ref, const AlignOptions& options = {});

/// Translates the test raster by (dx, dy), adds dz to valid cells and
/// resamples onto `grid`.
Raster apply_alignment(const Raster& test, const GlobalAlignment& a, const Raster& grid);
inline Raster apply_alignment(const Raster& test, const GlobalAlignment& a) {
  return apply_alignment(test, a, test);
}

nlohmann::json alignment_to_json(const GlobalAlignment& a);
GlobalAlignment alignment_from_json(const nlohmann::json& j);

}  // namespace ctf3d
