#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "ctf3d/crs.hpp"
#include "ctf3d/error.hpp"
#include "ctf3d/geojson.hpp"
#include "ctf3d/geotiff.hpp"
#include "ctf3d/hash.hpp"
#include "ctf3d/log.hpp"
#include "ctf3d/osm.hpp"
#include "ctf3d/pointcloud.hpp"
#include "doctest.h"
#include "httplib.h"

using namespace ctf3d;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CTF3D_TEST_DATA;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ctf3d_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int n = 0;
    return n;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CsvPoint {
  double x, y, z;
  int cls;
  bool withheld;
};

std::vector<CsvPoint> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<CsvPoint> out;
  while (std::getline(in, line)) {
    CsvPoint c{};
    int w = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%d,%d", &c.x, &c.y, &c.z, &c.cls, &w) == 5) {
      c.withheld = w != 0;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("utm conversions match an independent projection library") {
  struct Case {
    const char* from;
    const char* to;
    double x, y, ex, ey;
  };
  // Reference values from pyproj.
  const Case cases[] = {
      {"EPSG:32611", "EPSG:32612", 740000, 3950000, 196871.16552245844, 3951929.0044325585},
      {"EPSG:4326", "EPSG:32611", -115.0, 36.2, 679810.1454957715, 4007985.6702423096},
      {"EPSG:4326", "EPSG:32611", -114.05, 36.25, 765070.303671823, 4015714.7746085804},
      {"EPSG:4326", "EPSG:32717", -81.5, -2.3, 444406.33254564984, 9745769.788097886},
  };
  for (const auto& c : cases) {
    const Point2 p = convert_point({c.x, c.y}, Crs::parse(c.from), Crs::parse(c.to));
    CHECK(std::abs(p.x - c.ex) < 1e-3);
    CHECK(std::abs(p.y - c.ey) < 1e-3);
  }
  const Point2 ll = convert_point({650000, 4010000}, Crs::parse("EPSG:32611"), Crs::parse("EPSG:4326"));
  CHECK(std::abs(ll.x - -115.3310487065017) < 1e-8);
  CHECK(std::abs(ll.y - 36.22323378600784) < 1e-8);

  // Round trips.
  for (double lon = -119.5; lon < -113; lon += 0.7) {
    for (double lat = -60; lat <= 70; lat += 13) {
      const Crs utm = Crs::epsg(lat < 0 ? 32711 : 32611);
      const Point2 en = convert_point({lon, lat}, Crs::epsg(4326), utm);
      const Point2 back = convert_point(en, utm, Crs::epsg(4326));
      CHECK(std::abs(back.x - lon) < 1e-9);
      CHECK(std::abs(back.y - lat) < 1e-9);
    }
  }
  CHECK_THROWS_AS(convert_point({0, 0}, Crs::parse("LOCAL:site"), Crs::epsg(4326)), Error);
  CHECK(Crs::parse("32611") == Crs::parse("epsg:32611"));
  CHECK(Crs::parse("EPSG:32711").utm_south());
}

TEST_CASE("las fixture decodes like the reference csv") {
  const auto expected = read_csv(kData / "reference_small.csv");
  const auto cloud = load_point_cloud(kData / "reference_small.las", {});
  REQUIRE(cloud.size() == expected.size());
  CHECK(cloud.crs == Crs::parse("EPSG:32611"));
  std::size_t withheld = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(std::abs(cloud.points[i].x - expected[i].x) < 1e-6);
    CHECK(std::abs(cloud.points[i].y - expected[i].y) < 1e-6);
    CHECK(std::abs(cloud.points[i].z - expected[i].z) < 1e-6);
    CHECK(cloud.labels[i] == label_from_asprs(expected[i].cls));
    CHECK(bool(cloud.withheld[i]) == expected[i].withheld);
    withheld += expected[i].withheld;
  }
  CHECK(withheld > 0);
  CHECK(cloud.labels[0] == ClassLabel::unlabeled);
  CHECK(cloud.labels[1] == ClassLabel::unlabeled);

  const auto kept = filter_points(cloud, {});
  CHECK(kept.size() == cloud.size() - withheld);
}

TEST_CASE("las round trip with sidecar and reprojection") {
  TempDir tmp;
  ClassifiedPointCloud c;
  c.crs = Crs::parse("EPSG:32611");
  for (int i = 0; i < 500; ++i) {
    c.push_back({740000 + i * 0.37, 3950000 - i * 0.11, 100 + std::sin(i) * 5},
                static_cast<ClassLabel>(i % kNumClassLabels), float(i % 7) / 6.0F, i % 13 == 0);
  }
  const fs::path p = tmp.path / "cloud.las";
  save_point_cloud(c, p);
  CHECK(fs::exists(p.string() + ".c3dl"));

  const auto back = load_point_cloud(p, {});
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(back.points[i].x - c.points[i].x) <= 0.0005 + 1e-9);
    CHECK(back.labels[i] == c.labels[i]);
    CHECK(back.confidence[i] == c.confidence[i]);
    CHECK(back.withheld[i] == c.withheld[i]);
  }

  LoadOptions to12;
  to12.target_crs = Crs::parse("EPSG:32612");
  const auto moved = load_point_cloud(p, to12);
  CHECK(moved.crs == to12.target_crs);
  CHECK(std::abs(moved.points[0].x - 196871.16552245844) < 1e-3);
  CHECK(std::abs(moved.points[0].y - 3951929.0044325585) < 1e-3);

  // Without the sidecar, labels fall back to the ASPRS codes.
  fs::remove(p.string() + ".c3dl");
  const auto plain = load_point_cloud(p, {});
  CHECK(plain.labels[2] == ClassLabel::building);
  CHECK(plain.labels[3] == ClassLabel::unlabeled);  // wall has no ASPRS code
}

TEST_CASE("las failure modes") {
  TempDir tmp;
  ClassifiedPointCloud c;
  c.crs = Crs::parse("LOCAL:site");
  c.push_back({1, 2, 3});
  const fs::path p = tmp.path / "nocrs.las";
  {
    SaveOptions opt;
    opt.write_sidecar = false;
    save_point_cloud(c, p, opt);
  }
  try {
    load_point_cloud(p, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("--crs") != std::string::npos);
  }
  LoadOptions ov;
  ov.crs_override = Crs::parse("EPSG:32611");
  CHECK(load_point_cloud(p, ov).crs == Crs::parse("EPSG:32611"));

  // Truncated data: the error carries the byte offset where decoding stopped.
  const std::string bytes = slurp(kData / "reference_small.las");
  const fs::path cut = tmp.path / "cut.las";
  std::ofstream(cut, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size() - 40));
  try {
    load_point_cloud(cut, {});
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() > 0);
    CHECK(e.offset() <= bytes.size());
  }

  const fs::path junk = tmp.path / "junk.las";
  std::ofstream(junk, std::ios::binary) << "NOTALASFILE";
  CHECK_THROWS_AS(load_point_cloud(junk, {}), ParseError);
  CHECK_THROWS_AS(load_point_cloud(tmp.path / "missing.las", {}), Error);
}

TEST_CASE("geotiff round trip") {
  TempDir tmp;
  Raster r(37, 21, GeoTransform{650000.25, 4010000.5, 0.5, -0.5}, Crs::parse("EPSG:32611"), -1234.5F);
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) r.at(x, y) = float(x * 0.25 - y * 1.5);
  }
  r.at(3, 4) = r.nodata();
  write_geotiff(r, tmp.path / "r.tif");
  const Raster back = read_geotiff(tmp.path / "r.tif");
  CHECK(back.same_grid(r));
  CHECK(back.crs() == r.crs());
  CHECK(back.nodata() == r.nodata());
  CHECK(std::equal(r.values().begin(), r.values().end(), back.values().begin()));

  Raster opaque(4, 3, GeoTransform{0, 0, 1, -1}, Crs::parse("LOCAL:site"));
  write_geotiff(opaque, tmp.path / "o.tif");
  CHECK(read_geotiff(tmp.path / "o.tif").crs() == opaque.crs());
  CHECK_THROWS_AS(read_geotiff(tmp.path / "nope.tif"), Error);
}

TEST_CASE("geojson footprints") {
  TempDir tmp;
  FootprintSet fps;
  fps.crs = Crs::parse("EPSG:32611");
  Polygon with_hole = Polygon::make({{650000, 4010000}, {650020, 4010000}, {650020, 4010020}, {650000, 4010020}},
                                    {{{650005, 4010005}, {650005, 4010010}, {650010, 4010010}, {650010, 4010005}}});
  fps.features.push_back({7, with_hole, FootprintSource::provided, {0.5, -1.0}, false});
  fps.features.push_back({9, Polygon::rectangle(650100, 4010100, 650110, 4010130), FootprintSource::osm, {}, true});
  save_footprints_geojson(fps, tmp.path / "f.geojson");

  const auto doc = read_json_file(tmp.path / "f.geojson");
  const auto first = doc["features"][0]["geometry"]["coordinates"][0][0];
  CHECK(std::abs(first[0].get<double>()) <= 180.0);  // lon/lat on disk

  const FootprintSet back = load_footprints_geojson(tmp.path / "f.geojson");
  CHECK(back.crs == fps.crs);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.features[i].id == fps.features[i].id);
    CHECK(back.features[i].source == fps.features[i].source);
    CHECK(back.features[i].alignment_flagged == fps.features[i].alignment_flagged);
    CHECK(polygon_area(back.features[i].polygon) == doctest::Approx(polygon_area(fps.features[i].polygon)).epsilon(1e-6));
  }
  CHECK(back.features[0].polygon.holes().size() == 1);
  CHECK(back.features[0].alignment_shift.x == doctest::Approx(0.5));

  // Local CRS stays in native coordinates.
  FootprintSet local = fps;
  local.crs = Crs::parse("LOCAL:site");
  save_footprints_geojson(local, tmp.path / "l.geojson");
  const FootprintSet lb = load_footprints_geojson(tmp.path / "l.geojson");
  CHECK(lb.crs == local.crs);
  CHECK(lb.features[1].polygon.exterior() == local.features[1].polygon.exterior());

  // MultiPolygon parts become separate features; missing ids continue after
  // the largest explicit one.
  const auto multi = nlohmann::json::parse(R"({
    "type": "FeatureCollection",
    "features": [
      {"type": "Feature", "properties": {"id": 40},
       "geometry": {"type": "Polygon", "coordinates": [[[0,0],[4,0],[4,4],[0,4],[0,0]]]}},
      {"type": "Feature", "properties": {},
       "geometry": {"type": "MultiPolygon", "coordinates": [
          [[[10,0],[14,0],[14,4],[10,4],[10,0]]],
          [[[20,0],[24,0],[24,4],[20,4],[20,0]]]]}}
    ]})");
  const FootprintSet m = footprints_from_geojson(multi);
  REQUIRE(m.size() == 3);
  CHECK(m.features[0].id == 40);
  CHECK(m.features[1].id != m.features[2].id);
  CHECK(m.features[1].id > 40);
  CHECK(m.features[2].id > 40);
}

TEST_CASE("overpass parsing and cache") {
  const std::string text = slurp(kData / "overpass_buildings.json");
  log::WarningCapture warnings;
  const FootprintSet fps = parse_overpass_json(text, Crs::parse("EPSG:32611"));
  CHECK(fps.size() == 12);
  CHECK(warnings.contains("599999"));
  for (const auto& f : fps.features) {
    CHECK(f.source == FootprintSource::osm);
    CHECK(f.id >= 500000);
    CHECK(f.id <= 500011);
    CHECK(polygon_area(f.polygon) > 10.0);
  }
  CHECK(parse_overpass_json(R"({"elements": []})", Crs::parse("EPSG:32611")).size() == 0);
  CHECK_THROWS_AS(parse_overpass_json("{not json", Crs::parse("EPSG:32611")), Error);

  const std::string q = overpass_query({-115.1, 36.2, -115.0, 36.3});
  CHECK(q.find("way[\"building\"](36.2") != std::string::npos);
  CHECK(q.find("out geom") != std::string::npos);

  // A cached response is used without touching the network.
  TempDir tmp;
  const LonLatBox box{-115.04, 36.22, -115.02, 36.24};
  fs::copy_file(kData / "overpass_buildings.json", osm_cache_path(tmp.path, box));
  OsmOptions opt;
  opt.cache_dir = tmp.path;
  opt.endpoint = "http://127.0.0.1:9/unreachable";
  CHECK(fetch_osm_footprints(box, Crs::parse("EPSG:32611"), opt).size() == 12);
  CHECK(osm_cache_path(tmp.path, box) != osm_cache_path(tmp.path, LonLatBox{-115.04, 36.22, -115.02, 36.25}));
}

TEST_CASE("overpass over http") {
  const std::string text = slurp(kData / "overpass_buildings.json");
  httplib::Server server;
  int calls = 0;
  std::string received;
  server.Post("/api/interpreter", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    received = req.has_param("data") ? req.get_param_value("data") : req.body;
    if (calls == 1) {
      res.status = 503;  // first attempt fails, the retry succeeds
      return;
    }
    res.set_content(text, "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  TempDir tmp;
  OsmOptions opt;
  opt.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/api/interpreter";
  opt.cache_dir = tmp.path;
  const LonLatBox box{-115.04, 36.22, -115.02, 36.24};
  const FootprintSet fps = fetch_osm_footprints(box, Crs::parse("EPSG:32611"), opt);
  CHECK(fps.size() == 12);
  CHECK(calls == 2);
  CHECK(received.find("building") != std::string::npos);
  CHECK(fs::exists(osm_cache_path(tmp.path, box)));

  // Second call is served from the cache.
  CHECK(fetch_osm_footprints(box, Crs::parse("EPSG:32611"), opt).size() == 12);
  CHECK(calls == 2);

  server.stop();
  th.join();
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
