#pragma once

// Single-threaded reference versions of the OpenMP kernels. They are kept
// deliberately plain; the test suite checks the parallel kernels against
// them bit for bit and the benchmark compares their speed.

#include "ctf3d/binary_grid.hpp"
#include "ctf3d/pointcloud.hpp"
#include "ctf3d/raster.hpp"

namespace ctf3d::serial {

Raster rasterize_max_dsm(const ClassifiedPointCloud& cloud, const Raster& grid);
Raster rasterize_min_ground(const ClassifiedPointCloud& cloud, const Raster& grid);
Raster laplace_fill(const Raster& seeds, const FillOptions& fill = {});
Raster rasterize_mesh(const TriangleMesh& mesh, const Raster& grid);
Raster resample_to_grid(const Raster& src, const Raster& target);
Raster downsample2(const Raster& r);
BinaryGrid dilate3(const BinaryGrid& g);
BinaryGrid erode3(const BinaryGrid& g);

}  // namespace ctf3d::serial
