#pragma once

#include <filesystem>

#include "ctf3d/raster.hpp"

namespace ctf3d {

/// Reads band 1 of a north-up GeoTIFF. Integer and float64 samples are
/// converted to float32. The CRS comes from the projected/geographic
/// GeoKey, or from the GeoTIFF citation when no EPSG code is present.
Raster read_geotiff(const std::filesystem::path& path);

/// Writes an uncompressed single-band float32 GeoTIFF with pixel scale,
/// tie point, GeoKeys and the GDAL nodata tag.
void write_geotiff(const Raster& raster, const std::filesystem::path& path);

}  // namespace ctf3d
