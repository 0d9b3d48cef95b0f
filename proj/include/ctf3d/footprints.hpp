#pragma once

#include "ctf3d/binary_grid.hpp"
#include "ctf3d/footprint_set.hpp"
#include "ctf3d/pointcloud.hpp"
#include "ctf3d/raster.hpp"

namespace ctf3d {

/// Binary building and ground masks on the reference grid. Cells that no
/// usable point reaches are nodata, except where morphology turned a
/// building cell on.
struct MaskPair {
  Raster building;
  Raster ground;
};

/// Each non-withheld point marks the cell containing it. The building mask
/// takes building points with confidence >= conf_threshold and is then
/// closed and opened with a 3x3 element; the ground mask is left raw.
MaskPair build_masks(const ClassifiedPointCloud& cloud, const Raster& ref_grid, double conf_threshold = 0.5);

/// 1-cells of a mask raster as a binary grid (0 and nodata become 0).
BinaryGrid mask_cells(const Raster& mask);

struct PolygonizeOptions {
  double min_area = 25.0;     // m^2, applied after simplification
  double dp_epsilon = -1.0;   // meters; negative means one reference cell
  bool simplify = true;
};

/// 4-connected components of the mask's 1-cells, traced as pixel-boundary
/// rings (holes included), converted to map coordinates and simplified.
/// Ids are 1.. in row-major discovery order of the kept components.
FootprintSet polygonize_mask(const Raster& mask, const PolygonizeOptions& options = {});

/// Per-footprint integer-cell translation within a disk of the given radius
/// minimizing (#ground 1-cells) - (#building 1-cells) under the footprint.
/// Ties go to the shortest shift, then row-major order. Footprints with no
/// valid mask cell under any candidate keep a zero shift and are flagged.
FootprintSet align_footprints(const FootprintSet& fps, const MaskPair& masks, int search_radius_px);

/// Alignment score of one footprint at an integer shift (exposed for tests).
long footprint_score(const Footprint& fp, const MaskPair& masks, int shift_col, int shift_row);

}  // namespace ctf3d
