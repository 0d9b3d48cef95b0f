// Serial reference kernels against their OpenMP counterparts.
// Parallel variants take the thread count as the benchmark argument.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "ctf3d/binary_grid.hpp"
#include "ctf3d/raster.hpp"
#include "ctf3d/serial.hpp"

using namespace ctf3d;

namespace {

const Crs kUtm = Crs::parse("EPSG:32611");

// A city-like cloud: undulating ground with box buildings, 2 points per m^2.
const ClassifiedPointCloud& cloud() {
  static const ClassifiedPointCloud c = [] {
    ClassifiedPointCloud pc;
    pc.crs = kUtm;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 400.0);
    const std::size_t n = 320000;
    pc.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = u(rng), y = u(rng);
      const bool roof = std::fmod(x, 40.0) > 12.0 && std::fmod(y, 50.0) > 15.0;
      const double z = 100.0 + std::sin(x / 30.0) + (roof ? 12.0 : 0.0);
      pc.push_back({500000.0 + x, 4000000.0 + y, z}, roof ? ClassLabel::building : ClassLabel::ground);
    }
    return pc;
  }();
  return c;
}

const Raster& grid() {
  static const Raster g = grid_for_cloud(cloud(), 0.5);
  return g;
}

// Ground seeds with the buildings cut out, leaving holes to fill. Cropped:
// the fill converges slowly across wide holes.
const Raster& seeds() {
  static const Raster s = serial::rasterize_min_ground(cloud(), grid()).crop(0, 0, 256, 256);
  return s;
}

const BinaryGrid& mask() {
  static const BinaryGrid m = [] {
    BinaryGrid b(1024, 1024);
    std::mt19937 rng(5);
    std::bernoulli_distribution on(0.4);
    for (auto& c : b.cells) c = on(rng);
    return b;
  }();
  return m;
}

const TriangleMesh& mesh() {
  static const TriangleMesh m = [] {
    TriangleMesh t;
    t.crs = kUtm;
    const int n = 200;
    for (int j = 0; j <= n; ++j) {
      for (int i = 0; i <= n; ++i) {
        t.vertices.push_back({500000.0 + 2.0 * i, 4000000.0 + 2.0 * j, 100.0 + std::sin(i * 0.1) * std::cos(j * 0.1)});
      }
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const auto v = static_cast<std::uint32_t>(j * (n + 1) + i);
        t.triangles.push_back({v, v + 1, v + n + 1});
        t.triangles.push_back({v + 1, v + n + 2, v + n + 1});
      }
    }
    return t;
  }();
  return m;
}

void threads(benchmark::State& state) { omp_set_num_threads(static_cast<int>(state.range(0))); }

void BM_dsm_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serial::rasterize_max_dsm(cloud(), grid()));
}
void BM_dsm_parallel(benchmark::State& state) {
  threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_max_dsm(cloud(), grid()));
}

void BM_fill_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serial::laplace_fill(seeds()));
}
void BM_fill_parallel(benchmark::State& state) {
  threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(laplace_fill(seeds()));
}

void BM_morphology_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serial::erode3(serial::dilate3(mask())));
}
void BM_morphology_parallel(benchmark::State& state) {
  threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(close3(mask()));
}

void BM_resample_serial(benchmark::State& state) {
  const Raster coarse = serial::downsample2(serial::rasterize_max_dsm(cloud(), grid()));
  for (auto _ : state) benchmark::DoNotOptimize(serial::resample_to_grid(coarse, grid()));
}
void BM_resample_parallel(benchmark::State& state) {
  threads(state);
  const Raster coarse = downsample2(rasterize_max_dsm(cloud(), grid()));
  for (auto _ : state) benchmark::DoNotOptimize(resample_to_grid(coarse, grid()));
}

void BM_mesh_serial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(serial::rasterize_mesh(mesh(), grid()));
}
void BM_mesh_parallel(benchmark::State& state) {
  threads(state);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_mesh(mesh(), grid()));
}

}  // namespace

BENCHMARK(BM_dsm_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_dsm_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_fill_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_fill_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_morphology_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_morphology_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_resample_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_resample_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_mesh_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_mesh_parallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
