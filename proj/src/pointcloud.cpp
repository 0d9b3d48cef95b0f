#include "ctf3d/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>

#include "ctf3d/error.hpp"
#include "ctf3d/log.hpp"

namespace ctf3d {
namespace {

// Little-endian field access into a byte buffer with bounds checking that
// reports the failing offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : data_(std::move(data)) {}

  std::size_t size() const { return data_.size(); }

  void need(std::uint64_t offset, std::uint64_t n, const char* what) const {
    if (offset + n > data_.size()) {
      throw ParseError(std::string("LAS truncated while reading ") + what, offset);
    }
  }

  template <class T>
  T get(std::uint64_t offset, const char* what = "field") const {
    need(offset, sizeof(T), what);
    T v;
    std::memcpy(&v, data_.data() + offset, sizeof(T));
    return v;
  }

  std::string str(std::uint64_t offset, std::size_t n) const {
    need(offset, n, "string");
    std::string s(data_.data() + offset, n);
    s.erase(std::find(s.begin(), s.end(), '\0'), s.end());
    return s;
  }

  const char* ptr(std::uint64_t offset) const { return data_.data() + offset; }

 private:
  std::vector<char> data_;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

std::size_t min_record_length(int format) {
  static constexpr std::array<std::size_t, 11> kLen{20, 28, 26, 34, 57, 63, 30, 36, 38, 59, 67};
  return kLen.at(static_cast<std::size_t>(format));
}

struct VlrCrs {
  int epsg = 0;
};

// EPSG code from a GeoKeyDirectory: projected CS key 3072, else geographic 2048.
int epsg_from_geokeys(const ByteReader& r, std::uint64_t off, std::uint64_t len) {
  if (len < 8) return 0;
  const auto nkeys = r.get<std::uint16_t>(off + 6);
  int geographic = 0;
  for (std::uint32_t k = 0; k < nkeys && 8 + 8 * (k + 1) <= len; ++k) {
    const std::uint64_t e = off + 8 + 8 * k;
    const auto id = r.get<std::uint16_t>(e);
    const auto loc = r.get<std::uint16_t>(e + 2);
    const auto value = r.get<std::uint16_t>(e + 6);
    if (loc != 0) continue;
    if (id == 3072 && value != 0 && value != 32767) return value;
    if (id == 2048 && value != 0 && value != 32767) geographic = value;
  }
  return geographic;
}

// The outermost authority of a WKT string is its last one.
int epsg_from_wkt(const std::string& wkt) {
  static const std::regex kAuthority(R"re((?:AUTHORITY|ID)\[\s*"EPSG"\s*,\s*"?(\d+)"?\s*\])re",
                                     std::regex::icase);
  int code = 0;
  for (auto it = std::sregex_iterator(wkt.begin(), wkt.end(), kAuthority);
       it != std::sregex_iterator(); ++it) {
    code = std::stoi((*it)[1].str());
  }
  return code;
}

template <class T>
void put(std::vector<char>& buf, std::size_t offset, T v) {
  if (buf.size() < offset + sizeof(T)) buf.resize(offset + sizeof(T), 0);
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

void put_str(std::vector<char>& buf, std::size_t offset, const std::string& s, std::size_t n) {
  if (buf.size() < offset + n) buf.resize(offset + n, 0);
  std::memcpy(buf.data() + offset, s.data(), std::min(s.size(), n));
}

}  // namespace

const char* to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::ground: return "ground";
    case ClassLabel::vegetation: return "vegetation";
    case ClassLabel::building: return "building";
    case ClassLabel::wall: return "wall";
    case ClassLabel::power_line: return "power_line";
    case ClassLabel::civilian_vehicle: return "civilian_vehicle";
    case ClassLabel::truck: return "truck";
    case ClassLabel::military_vehicle: return "military_vehicle";
    case ClassLabel::aircraft: return "aircraft";
    case ClassLabel::pole: return "pole";
    case ClassLabel::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

ClassLabel label_from_asprs(int code) {
  switch (code) {
    case 2: return ClassLabel::ground;
    case 3:
    case 4:
    case 5: return ClassLabel::vegetation;
    case 6: return ClassLabel::building;
    default: return ClassLabel::unlabeled;
  }
}

int asprs_from_label(ClassLabel label) {
  switch (label) {
    case ClassLabel::ground: return 2;
    case ClassLabel::vegetation: return 5;
    case ClassLabel::building: return 6;
    default: return 1;
  }
}

void ClassifiedPointCloud::reserve(std::size_t n) {
  points.reserve(n);
  labels.reserve(n);
  confidence.reserve(n);
  withheld.reserve(n);
}

void ClassifiedPointCloud::push_back(Point3 p, ClassLabel label, float conf, bool is_withheld) {
  points.push_back(p);
  labels.push_back(label);
  confidence.push_back(conf);
  withheld.push_back(is_withheld ? 1 : 0);
}

void ClassifiedPointCloud::validate() const {
  const std::size_t n = points.size();
  if (labels.size() != n || confidence.size() != n || withheld.size() != n) {
    throw Error(ErrorKind::invalid_argument, "point cloud arrays differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point3& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw Error(ErrorKind::invalid_argument, "point " + std::to_string(i) + " is not finite");
    }
    if (!(confidence[i] >= 0.0F && confidence[i] <= 1.0F)) {
      throw Error(ErrorKind::invalid_argument, "confidence outside [0,1] at point " + std::to_string(i));
    }
    if (static_cast<int>(labels[i]) >= kNumClassLabels) {
      throw Error(ErrorKind::invalid_argument, "unknown class label at point " + std::to_string(i));
    }
  }
}

ClassifiedPointCloud filter_points(const ClassifiedPointCloud& cloud, const PointFilter& filter) {
  ClassifiedPointCloud out;
  out.crs = cloud.crs;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (filter.exclude_withheld && cloud.withheld[i]) continue;
    if (filter.classes && !filter.classes->contains(cloud.labels[i])) continue;
    out.push_back(cloud.points[i], cloud.labels[i], cloud.confidence[i], cloud.withheld[i] != 0);
  }
  return out;
}

LabelSidecar read_label_sidecar(const std::filesystem::path& path) {
  const ByteReader r(read_file(path));
  if (r.size() < 16 || r.str(0, 4) != "C3DL") throw ParseError("bad sidecar magic in '" + path.string() + "'", 0);
  const auto version = r.get<std::uint32_t>(4);
  if (version != 1) throw ParseError("unsupported sidecar version " + std::to_string(version), 4);
  const auto count = r.get<std::uint64_t>(8);
  r.need(16, count * 5, "sidecar records");
  LabelSidecar s;
  s.labels.resize(count);
  s.confidence.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t off = 16 + 5 * i;
    const auto label = r.get<std::uint8_t>(off);
    if (label >= kNumClassLabels) throw ParseError("sidecar label out of range", off);
    s.labels[i] = static_cast<ClassLabel>(label);
    s.confidence[i] = r.get<float>(off + 1);
  }
  return s;
}

void write_label_sidecar(const std::filesystem::path& path, const LabelSidecar& sidecar) {
  if (sidecar.labels.size() != sidecar.confidence.size()) {
    throw Error(ErrorKind::invalid_argument, "sidecar label/confidence length mismatch");
  }
  std::vector<char> buf;
  put_str(buf, 0, "C3DL", 4);
  put<std::uint32_t>(buf, 4, 1);
  put<std::uint64_t>(buf, 8, sidecar.labels.size());
  buf.resize(16 + 5 * sidecar.labels.size());
  for (std::size_t i = 0; i < sidecar.labels.size(); ++i) {
    put<std::uint8_t>(buf, 16 + 5 * i, static_cast<std::uint8_t>(sidecar.labels[i]));
    put<float>(buf, 16 + 5 * i + 1, sidecar.confidence[i]);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  }
}

ClassifiedPointCloud load_point_cloud(const std::filesystem::path& path, const LoadOptions& options) {
  if (path.extension() == ".laz" || path.extension() == ".LAZ") {
    throw Error(ErrorKind::invalid_argument, "LAZ input is not supported by this build; decompress to LAS first");
  }
  const ByteReader r(read_file(path));
  if (r.size() < 227 || r.str(0, 4) != "LASF") throw ParseError("not a LAS file: '" + path.string() + "'", 0);
  const int vmajor = r.get<std::uint8_t>(24);
  const int vminor = r.get<std::uint8_t>(25);
  if (vmajor != 1 || vminor < 2 || vminor > 4) {
    throw ParseError("unsupported LAS version " + std::to_string(vmajor) + "." + std::to_string(vminor), 24);
  }
  const auto header_size = r.get<std::uint16_t>(94);
  const auto point_offset = r.get<std::uint32_t>(96);
  const auto n_vlr = r.get<std::uint32_t>(100);
  const int format = r.get<std::uint8_t>(104) & 0x3F;
  const auto record_len = r.get<std::uint16_t>(105);
  if (format > 10) throw ParseError("unsupported point format " + std::to_string(format), 104);
  if (record_len < min_record_length(format)) throw ParseError("point record length too short", 105);
  std::uint64_t count = r.get<std::uint32_t>(107);
  if (vminor == 4 && header_size >= 375) {
    const auto count64 = r.get<std::uint64_t>(247);
    if (count64 != 0) count = count64;
  }
  const double sx = r.get<double>(131), sy = r.get<double>(139), sz = r.get<double>(147);
  const double ox = r.get<double>(155), oy = r.get<double>(163), oz = r.get<double>(171);

  int epsg = 0;
  auto scan_record = [&](const std::string& user, std::uint16_t id, std::uint64_t off, std::uint64_t len) {
    if (user != "LASF_Projection") return;
    r.need(off, len, "VLR payload");
    if (id == 34735) {
      const int code = epsg_from_geokeys(r, off, len);
      if (code != 0 && epsg == 0) epsg = code;
    } else if (id == 2112) {
      const int code = epsg_from_wkt(r.str(off, len));
      if (code != 0) epsg = code;
    }
  };
  std::uint64_t off = header_size;
  for (std::uint32_t v = 0; v < n_vlr; ++v) {
    r.need(off, 54, "VLR header");
    const auto len = r.get<std::uint16_t>(off + 20);
    scan_record(r.str(off + 2, 16), r.get<std::uint16_t>(off + 18), off + 54, len);
    off += 54 + len;
  }
  if (vminor == 4 && header_size >= 375) {
    std::uint64_t eoff = r.get<std::uint64_t>(235);
    const auto n_evlr = r.get<std::uint32_t>(243);
    for (std::uint32_t v = 0; v < n_evlr && eoff != 0; ++v) {
      r.need(eoff, 60, "EVLR header");
      const auto len = r.get<std::uint64_t>(eoff + 20);
      scan_record(r.str(eoff + 2, 16), r.get<std::uint16_t>(eoff + 18), eoff + 60, len);
      eoff += 60 + len;
    }
  }

  Crs file_crs = epsg != 0 ? Crs::epsg(epsg) : Crs();
  if (file_crs.empty()) {
    if (!options.crs_override) {
      throw Error(ErrorKind::invalid_argument,
                  "'" + path.string() + "' carries no recognizable CRS; pass an explicit CRS override (--crs)");
    }
    file_crs = *options.crs_override;
  }
  const Crs target = options.target_crs.empty() ? file_crs : options.target_crs;
  const bool convert = !(target == file_crs);
  if (convert && (!file_crs.convertible() || !target.convertible())) {
    throw Error(ErrorKind::invalid_argument,
                "cannot convert '" + file_crs.id() + "' to '" + target.id() + "'");
  }

  r.need(point_offset, count * record_len, "point records");
  ClassifiedPointCloud cloud;
  cloud.crs = target;
  cloud.reserve(count);
  const bool extended = format >= 6;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t p = point_offset + i * record_len;
    Point3 pt{r.get<std::int32_t>(p) * sx + ox, r.get<std::int32_t>(p + 4) * sy + oy,
              r.get<std::int32_t>(p + 8) * sz + oz};
    int code;
    bool withheld;
    if (extended) {
      withheld = (r.get<std::uint8_t>(p + 15) & 0x04) != 0;
      code = r.get<std::uint8_t>(p + 16);
    } else {
      const auto b = r.get<std::uint8_t>(p + 15);
      withheld = (b & 0x80) != 0;
      code = b & 0x1F;
    }
    if (convert) {
      const Point2 q = convert_point({pt.x, pt.y}, file_crs, target);
      pt.x = q.x;
      pt.y = q.y;
    }
    cloud.push_back(pt, label_from_asprs(code), 1.0F, withheld);
  }

  std::filesystem::path sidecar = options.sidecar.value_or(path.string() + ".c3dl");
  if (options.sidecar || std::filesystem::exists(sidecar)) {
    const LabelSidecar s = read_label_sidecar(sidecar);
    if (s.labels.size() != cloud.size()) {
      throw Error(ErrorKind::parse, "sidecar '" + sidecar.string() + "' has " +
                                        std::to_string(s.labels.size()) + " records for " +
                                        std::to_string(cloud.size()) + " points");
    }
    cloud.labels = s.labels;
    cloud.confidence = s.confidence;
  }
  cloud.validate();
  return cloud;
}

void save_point_cloud(const ClassifiedPointCloud& cloud, const std::filesystem::path& path,
                      const SaveOptions& options) {
  cloud.validate();
  if (!(options.scale > 0.0)) throw Error(ErrorKind::invalid_argument, "LAS scale must be positive");
  double mn[3] = {INFINITY, INFINITY, INFINITY}, mx[3] = {-INFINITY, -INFINITY, -INFINITY};
  for (const Point3& p : cloud.points) {
    const double v[3] = {p.x, p.y, p.z};
    for (int k = 0; k < 3; ++k) {
      mn[k] = std::min(mn[k], v[k]);
      mx[k] = std::max(mx[k], v[k]);
    }
  }
  if (cloud.empty()) {
    for (int k = 0; k < 3; ++k) mn[k] = mx[k] = 0.0;
  }
  double offset[3];
  for (int k = 0; k < 3; ++k) {
    offset[k] = std::floor((mn[k] + mx[k]) / 2.0);
    if ((mx[k] - offset[k]) / options.scale > 2.0e9 || (offset[k] - mn[k]) / options.scale > 2.0e9) {
      throw Error(ErrorKind::invalid_argument, "coordinate range too large for the LAS scale");
    }
  }

  std::vector<char> vlr;
  if (cloud.crs.epsg_code() != 0) {
    const bool geographic = cloud.crs.is_geographic();
    const std::vector<std::uint16_t> keys{1, 1, 0, 2,
                                          1024, 0, 1, static_cast<std::uint16_t>(geographic ? 2 : 1),
                                          static_cast<std::uint16_t>(geographic ? 2048 : 3072), 0, 1,
                                          static_cast<std::uint16_t>(cloud.crs.epsg_code())};
    put<std::uint16_t>(vlr, 0, 0);
    put_str(vlr, 2, "LASF_Projection", 16);
    put<std::uint16_t>(vlr, 18, 34735);
    put<std::uint16_t>(vlr, 20, static_cast<std::uint16_t>(keys.size() * 2));
    put_str(vlr, 22, "GeoKeyDirectoryTag", 32);
    for (std::size_t k = 0; k < keys.size(); ++k) put<std::uint16_t>(vlr, 54 + 2 * k, keys[k]);
  }

  constexpr std::uint16_t kHeader = 375;
  constexpr std::uint16_t kRecord = 30;
  const std::uint32_t point_offset = kHeader + static_cast<std::uint32_t>(vlr.size());
  std::vector<char> buf;
  put_str(buf, 0, "LASF", 4);
  put<std::uint8_t>(buf, 24, 1);
  put<std::uint8_t>(buf, 25, 4);
  put_str(buf, 26, "ctf3d", 32);
  put_str(buf, 58, "ctf3d", 32);
  put<std::uint16_t>(buf, 94, kHeader);
  put<std::uint32_t>(buf, 96, point_offset);
  put<std::uint32_t>(buf, 100, vlr.empty() ? 0 : 1);
  put<std::uint8_t>(buf, 104, 6);
  put<std::uint16_t>(buf, 105, kRecord);
  put<std::uint32_t>(buf, 107, 0);
  for (int k = 0; k < 3; ++k) {
    put<double>(buf, 131 + 8 * k, options.scale);
    put<double>(buf, 155 + 8 * k, offset[k]);
    put<double>(buf, 179 + 16 * k, mx[k]);
    put<double>(buf, 187 + 16 * k, mn[k]);
  }
  put<std::uint64_t>(buf, 247, cloud.size());
  put<std::uint64_t>(buf, 255, cloud.size());
  buf.resize(kHeader, 0);
  buf.insert(buf.end(), vlr.begin(), vlr.end());
  buf.resize(point_offset + cloud.size() * kRecord, 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::size_t p = point_offset + i * kRecord;
    const double v[3] = {cloud.points[i].x, cloud.points[i].y, cloud.points[i].z};
    for (int k = 0; k < 3; ++k) {
      put<std::int32_t>(buf, p + 4 * k, static_cast<std::int32_t>(std::llround((v[k] - offset[k]) / options.scale)));
    }
    put<std::uint8_t>(buf, p + 14, 0x11);  // return 1 of 1
    put<std::uint8_t>(buf, p + 15, cloud.withheld[i] ? 0x04 : 0x00);
    put<std::uint8_t>(buf, p + 16, static_cast<std::uint8_t>(asprs_from_label(cloud.labels[i])));
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
      throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
    }
  }
  if (options.write_sidecar) {
    write_label_sidecar(path.string() + ".c3dl", {cloud.labels, cloud.confidence});
  }
}

}  // namespace ctf3d
