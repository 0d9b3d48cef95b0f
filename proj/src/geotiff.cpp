#include "ctf3d/geotiff.hpp"

#include <tiffio.h>

#include <array>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ctf3d/error.hpp"

namespace ctf3d {
namespace {

constexpr ttag_t kPixelScale = 33550;
constexpr ttag_t kTiepoint = 33922;
constexpr ttag_t kGeoKeys = 34735;
constexpr ttag_t kGeoAscii = 34737;

constexpr std::uint16_t kModelTypeKey = 1024;
constexpr std::uint16_t kRasterTypeKey = 1025;
constexpr std::uint16_t kCitationKey = 1026;
constexpr std::uint16_t kGeographicTypeKey = 2048;
constexpr std::uint16_t kProjectedTypeKey = 3072;

TIFFExtendProc g_parent_extender = nullptr;

void register_geotiff_tags(TIFF* tif) {
  static const TIFFFieldInfo kFields[] = {
      {kPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScaleTag")},
      {kTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepointTag")},
      {kGeoKeys, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectoryTag")},
      {kGeoAscii, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GeoASCIIParamsTag")},
      {TIFFTAG_GDAL_NODATA, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataValue")},
  };
  TIFFMergeFieldInfo(tif, kFields, sizeof(kFields) / sizeof(kFields[0]));
  if (g_parent_extender != nullptr) g_parent_extender(tif);
}

void install_extender() {
  static std::once_flag once;
  std::call_once(once, [] { g_parent_extender = TIFFSetTagExtender(register_geotiff_tags); });
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

TiffPtr open_tiff(const std::filesystem::path& path, const char* mode) {
  install_extender();
  TIFFSetWarningHandler(nullptr);
  TiffPtr t(TIFFOpen(path.c_str(), mode));
  if (!t) throw Error(ErrorKind::io, "cannot open GeoTIFF '" + path.string() + "'");
  return t;
}

float sample_to_float(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == SAMPLEFORMAT_IEEEFP && bits == 32) { float v; std::memcpy(&v, p, 4); return v; }
  if (format == SAMPLEFORMAT_IEEEFP && bits == 64) { double v; std::memcpy(&v, p, 8); return static_cast<float>(v); }
  if (format == SAMPLEFORMAT_INT && bits == 16) { std::int16_t v; std::memcpy(&v, p, 2); return v; }
  if (format == SAMPLEFORMAT_INT && bits == 32) { std::int32_t v; std::memcpy(&v, p, 4); return static_cast<float>(v); }
  if (format == SAMPLEFORMAT_UINT && bits == 8) return *p;
  if (format == SAMPLEFORMAT_UINT && bits == 16) { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
  if (format == SAMPLEFORMAT_UINT && bits == 32) { std::uint32_t v; std::memcpy(&v, p, 4); return static_cast<float>(v); }
  throw Error(ErrorKind::parse, "unsupported GeoTIFF sample type");
}

}  // namespace

Raster read_geotiff(const std::filesystem::path& path) {
  TiffPtr tif = open_tiff(path, "r");
  TIFF* t = tif.get();
  std::uint32_t w = 0, h = 0;
  std::uint16_t spp = 1, bits = 32, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
  if (w == 0 || h == 0) throw Error(ErrorKind::parse, "GeoTIFF '" + path.string() + "' has no pixels");

  std::uint32_t n = 0;
  double* scale = nullptr;
  double* tie = nullptr;
  if (!TIFFGetField(t, kPixelScale, &n, &scale) || n < 2) {
    throw Error(ErrorKind::parse, "GeoTIFF '" + path.string() + "' lacks ModelPixelScale");
  }
  const double sx = scale[0], sy = scale[1];
  if (!TIFFGetField(t, kTiepoint, &n, &tie) || n < 6) {
    throw Error(ErrorKind::parse, "GeoTIFF '" + path.string() + "' lacks ModelTiepoint");
  }
  GeoTransform gt{tie[3] - tie[0] * sx, tie[4] + tie[1] * sy, sx, -sy};

  Crs crs;
  std::uint16_t* keys = nullptr;
  if (TIFFGetField(t, kGeoKeys, &n, &keys) && n >= 4) {
    char* ascii = nullptr;
    TIFFGetField(t, kGeoAscii, &ascii);
    const std::uint16_t nkeys = keys[3];
    int geographic = 0, projected = 0;
    std::string citation;
    for (std::uint32_t k = 0; k < nkeys && 4 * (k + 2) <= n; ++k) {
      const std::uint16_t* e = keys + 4 * (k + 1);
      if (e[1] == 0 && e[0] == kProjectedTypeKey) projected = e[3];
      if (e[1] == 0 && e[0] == kGeographicTypeKey) geographic = e[3];
      if (e[1] == kGeoAscii && e[0] == kCitationKey && ascii != nullptr) {
        const std::string all(ascii);
        if (e[3] < all.size()) citation = all.substr(e[3], e[2]);
        while (!citation.empty() && (citation.back() == '|' || citation.back() == '\0')) citation.pop_back();
      }
    }
    if (projected != 0 && projected != 32767) {
      crs = Crs::epsg(projected);
    } else if (geographic != 0 && geographic != 32767) {
      crs = Crs::epsg(geographic);
    } else if (!citation.empty()) {
      crs = Crs::parse(citation);
    }
  }

  float nodata = kDefaultNodata;
  char* nd = nullptr;
  if (TIFFGetField(t, TIFFTAG_GDAL_NODATA, &nd) && nd != nullptr) {
    try {
      nodata = std::stof(nd);
    } catch (const std::exception&) {
      throw Error(ErrorKind::parse, "GeoTIFF nodata tag is not numeric: '" + std::string(nd) + "'");
    }
  }

  Raster out(static_cast<int>(w), static_cast<int>(h), gt, crs, nodata);
  const std::size_t bytes = bits / 8;
  const std::size_t stride = planar == PLANARCONFIG_CONTIG ? bytes * spp : bytes;
  if (TIFFIsTiled(t)) {
    std::uint32_t tw = 0, th = 0;
    TIFFGetField(t, TIFFTAG_TILEWIDTH, &tw);
    TIFFGetField(t, TIFFTAG_TILELENGTH, &th);
    std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFTileSize(t)));
    for (std::uint32_t y0 = 0; y0 < h; y0 += th) {
      for (std::uint32_t x0 = 0; x0 < w; x0 += tw) {
        if (TIFFReadTile(t, buf.data(), x0, y0, 0, 0) < 0) {
          throw Error(ErrorKind::parse, "cannot read GeoTIFF tile");
        }
        for (std::uint32_t y = y0; y < std::min(h, y0 + th); ++y) {
          for (std::uint32_t x = x0; x < std::min(w, x0 + tw); ++x) {
            const std::size_t idx = (static_cast<std::size_t>(y - y0) * tw + (x - x0)) * stride;
            out.at(static_cast<int>(x), static_cast<int>(y)) = sample_to_float(buf.data() + idx, format, bits);
          }
        }
      }
    }
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFScanlineSize(t)));
    for (std::uint32_t y = 0; y < h; ++y) {
      if (TIFFReadScanline(t, buf.data(), y, 0) < 0) throw Error(ErrorKind::parse, "cannot read GeoTIFF row");
      for (std::uint32_t x = 0; x < w; ++x) {
        out.at(static_cast<int>(x), static_cast<int>(y)) = sample_to_float(buf.data() + x * stride, format, bits);
      }
    }
  }
  return out;
}

void write_geotiff(const Raster& raster, const std::filesystem::path& path) {
  TiffPtr tif = open_tiff(path, "w");
  TIFF* t = tif.get();
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(raster.width()));
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(raster.height()));
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, 1);
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 32);
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, TIFFDefaultStripSize(t, 0));

  const GeoTransform& gt = raster.transform();
  const std::array<double, 3> scale{gt.gsd_x, -gt.gsd_y, 0.0};
  const std::array<double, 6> tie{0.0, 0.0, 0.0, gt.origin_x, gt.origin_y, 0.0};
  TIFFSetField(t, kPixelScale, 3, scale.data());
  TIFFSetField(t, kTiepoint, 6, tie.data());

  const Crs& crs = raster.crs();
  std::vector<std::uint16_t> keys{1, 1, 0, 0};
  std::string ascii;
  auto add_key = [&](std::uint16_t id, std::uint16_t loc, std::uint16_t count, std::uint16_t value) {
    keys.insert(keys.end(), {id, loc, count, value});
    ++keys[3];
  };
  add_key(kModelTypeKey, 0, 1, crs.is_geographic() ? 2 : 1);
  add_key(kRasterTypeKey, 0, 1, 1);
  if (!crs.empty() && crs.epsg_code() == 0) {
    ascii = crs.id() + "|";
    add_key(kCitationKey, static_cast<std::uint16_t>(kGeoAscii), static_cast<std::uint16_t>(ascii.size()), 0);
  }
  if (crs.is_geographic()) {
    add_key(kGeographicTypeKey, 0, 1, 4326);
  } else if (crs.epsg_code() != 0) {
    add_key(kProjectedTypeKey, 0, 1, static_cast<std::uint16_t>(crs.epsg_code()));
  }
  TIFFSetField(t, kGeoKeys, static_cast<std::uint32_t>(keys.size()), keys.data());
  if (!ascii.empty()) TIFFSetField(t, kGeoAscii, ascii.c_str());

  char nodata[64];
  std::snprintf(nodata, sizeof nodata, "%.9g", static_cast<double>(raster.nodata()));
  TIFFSetField(t, TIFFTAG_GDAL_NODATA, nodata);

  std::vector<float> row(static_cast<std::size_t>(raster.width()));
  for (int r = 0; r < raster.height(); ++r) {
    for (int c = 0; c < raster.width(); ++c) row[static_cast<std::size_t>(c)] = raster.at(c, r);
    if (TIFFWriteScanline(t, row.data(), static_cast<std::uint32_t>(r), 0) < 0) {
      throw Error(ErrorKind::io, "cannot write GeoTIFF '" + path.string() + "'");
    }
  }
}

}  // namespace ctf3d
