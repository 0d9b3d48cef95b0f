#include "ctf3d/alignment.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include "ctf3d/error.hpp"
#include "ctf3d/stats.hpp"
#include "kernel_common.hpp"

namespace ctf3d {
namespace {

// FFTW planning is not thread-safe; execution on distinct arrays is.
std::mutex g_plan_mutex;

std::vector<double> prepared_tile(const Raster& tile, bool& constant) {
  const int w = tile.width(), h = tile.height();
  double sum = 0.0;
  std::size_t n = 0;
  for (float v : tile.values()) {
    if (tile.is_valid_value(v)) {
      sum += v;
      ++n;
    }
  }
  const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
  std::vector<double> out(tile.size());
  double lo = INFINITY, hi = -INFINITY;
  for (int r = 0; r < h; ++r) {
    const double wr = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (r + 0.5) / h);
    for (int c = 0; c < w; ++c) {
      const double wc = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (c + 0.5) / w);
      const float v = tile.at(c, r);
      const double x = tile.is_valid_value(v) ? v - mean : 0.0;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      out[tile.index(c, r)] = x * wr * wc;
    }
  }
  constant = !(hi - lo > 1e-9);
  return out;
}

// Offset of the parabola vertex through (-1, a), (0, b), (1, c).
double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (!(std::abs(denom) > 1e-15)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

double valid_fraction(const Raster& r, int col, int row, int w, int h) {
  std::size_t n = 0;
  for (int y = row; y < row + h; ++y) {
    for (int x = col; x < col + w; ++x) n += r.valid(x, y) ? 1 : 0;
  }
  return static_cast<double>(n) / (static_cast<double>(w) * h);
}

}  // namespace

PhaseCorrelation phase_correlate(const Raster& test_tile, const Raster& ref_tile) {
  if (test_tile.width() != ref_tile.width() || test_tile.height() != ref_tile.height()) {
    throw Error(ErrorKind::invalid_argument, "phase_correlate: tiles differ in size");
  }
  const int w = test_tile.width(), h = test_tile.height();
  if (w < 4 || h < 4) throw Error(ErrorKind::invalid_argument, "phase_correlate: tiles must be at least 4x4");
  PhaseCorrelation out;
  bool test_const = false, ref_const = false;
  std::vector<double> a = prepared_tile(ref_tile, ref_const);
  std::vector<double> b = prepared_tile(test_tile, test_const);
  if (test_const || ref_const) {
    out.low_confidence = true;
    return out;
  }

  const int wc = w / 2 + 1;
  const std::size_t nspec = static_cast<std::size_t>(h) * wc;
  auto* fa = fftw_alloc_complex(nspec);
  auto* fb = fftw_alloc_complex(nspec);
  std::vector<double> corr(static_cast<std::size_t>(w) * h);
  fftw_plan pa, pb, inv;
  {
    std::lock_guard lock(g_plan_mutex);
    pa = fftw_plan_dft_r2c_2d(h, w, a.data(), fa, FFTW_ESTIMATE);
    pb = fftw_plan_dft_r2c_2d(h, w, b.data(), fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_2d(h, w, fa, corr.data(), FFTW_ESTIMATE);
  }
  fftw_execute(pa);
  fftw_execute(pb);
  double max_mag = 0.0;
  for (std::size_t i = 0; i < nspec; ++i) {
    max_mag = std::max(max_mag, std::hypot(fa[i][0], fa[i][1]) * std::hypot(fb[i][0], fb[i][1]));
  }
  for (std::size_t i = 0; i < nspec; ++i) {
    const std::complex<double> ra(fa[i][0], fa[i][1]);
    const std::complex<double> rb(fb[i][0], fb[i][1]);
    std::complex<double> x = ra * std::conj(rb);
    const double mag = std::abs(x);
    x = mag > 1e-12 * max_mag ? x / mag : std::complex<double>(0.0, 0.0);
    fa[i][0] = x.real();
    fa[i][1] = x.imag();
  }
  fftw_execute(inv);
  {
    std::lock_guard lock(g_plan_mutex);
    fftw_destroy_plan(pa);
    fftw_destroy_plan(pb);
    fftw_destroy_plan(inv);
  }
  fftw_free(fa);
  fftw_free(fb);

  std::size_t best = 0;
  for (std::size_t i = 1; i < corr.size(); ++i) {
    if (corr[i] > corr[best]) best = i;
  }
  const int pr = static_cast<int>(best / w), pc = static_cast<int>(best % w);
  auto at = [&](int c, int r) { return corr[static_cast<std::size_t>((r + h) % h) * w + (c + w) % w]; };
  const double sc = parabolic_offset(at(pc - 1, pr), at(pc, pr), at(pc + 1, pr));
  const double sr = parabolic_offset(at(pc, pr - 1), at(pc, pr), at(pc, pr + 1));
  out.dx_px = (pc > w / 2 ? pc - w : pc) + sc;
  out.dy_px = (pr > h / 2 ? pr - h : pr) + sr;
  out.peak = corr[best] / (static_cast<double>(w) * h);
  out.low_confidence = !(out.peak > 0.0);
  return out;
}

GlobalAlignment global_align(const Raster& test, const Raster& ref, const AlignOptions& options) {
  if (!test.same_grid(ref)) throw Error(ErrorKind::invalid_argument, "global_align: rasters are not on the same grid");
  if (options.window_px < 32) throw Error(ErrorKind::invalid_argument, "global_align: window_px must be >= 32");
  const int win = options.window_px;
  const int nx = test.width() / win, ny = test.height() / win;
  GlobalAlignment out;
  out.window_px = win;
  out.windows.resize(static_cast<std::size_t>(nx) * ny);
  const double gx = test.transform().gsd_x, gy = test.transform().gsd_y;
  const int nwin = nx * ny;

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < nwin; ++k) {
    WindowAlignment& wa = out.windows[static_cast<std::size_t>(k)];
    wa.col = (k % nx) * win;
    wa.row = (k / nx) * win;
    wa.valid_fraction = std::min(valid_fraction(test, wa.col, wa.row, win, win),
                                 valid_fraction(ref, wa.col, wa.row, win, win));
    if (!(wa.valid_fraction > options.valid_frac_min)) continue;
    const Raster tt = test.crop(wa.col, wa.row, win, win);
    const Raster rt = ref.crop(wa.col, wa.row, win, win);
    const PhaseCorrelation pc = phase_correlate(tt, rt);
    wa.low_confidence = pc.low_confidence;
    if (pc.low_confidence) continue;
    wa.dx = pc.dx_px * gx;
    wa.dy = pc.dy_px * gy;

    // Vertical offset after the horizontal correction: the corrected test
    // at pixel p is the test sampled at p - correction.
    std::vector<double> diffs;
    diffs.reserve(static_cast<std::size_t>(win) * win);
    for (int r = 0; r < win; ++r) {
      for (int c = 0; c < win; ++c) {
        const float rv = rt.at(c, r);
        if (!rt.is_valid_value(rv)) continue;
        double tv;
        if (!detail::bilinear_sample(tt, c - pc.dx_px, r - pc.dy_px, tv)) continue;
        diffs.push_back(static_cast<double>(rv) - tv);
      }
    }
    if (diffs.empty()) continue;
    wa.dz = median(diffs);
    wa.accepted = true;
  }

  std::vector<double> dx, dy, dz;
  for (const WindowAlignment& wa : out.windows) {
    if (!wa.accepted) continue;
    dx.push_back(wa.dx);
    dy.push_back(wa.dy);
    dz.push_back(wa.dz);
  }
  if (dx.empty()) {
    throw Error(ErrorKind::numerical,
                "global_align: no subwindow passed the validity test (" + std::to_string(nwin) +
                    " windows of " + std::to_string(win) +
                    " px); use a smaller --window-px or supply --manual-offset dx,dy,dz");
  }
  out.dx = median(dx);
  out.dy = median(dy);
  out.dz = median(dz);
  return out;
}

Raster apply_alignment(const Raster& test, const GlobalAlignment& a, const Raster& grid) {
  Raster moved = test;
  for (float& v : moved.values()) {
    if (moved.is_valid_value(v)) v = static_cast<float>(v + a.dz);
  }
  if (a.dx == 0.0 && a.dy == 0.0 && moved.same_grid(grid)) return moved;
  GeoTransform t = moved.transform();
  t.origin_x += a.dx;
  t.origin_y += a.dy;
  Raster shifted(moved.width(), moved.height(), t, moved.crs(), moved.nodata());
  std::copy(moved.values().begin(), moved.values().end(), shifted.values().begin());
  const Raster target(grid.width(), grid.height(), grid.transform(), grid.crs(), test.nodata());
  return resample_to_grid(shifted, target);
}

nlohmann::json alignment_to_json(const GlobalAlignment& a) {
  nlohmann::json windows = nlohmann::json::array();
  for (const WindowAlignment& w : a.windows) {
    windows.push_back({{"col", w.col},
                       {"row", w.row},
                       {"dx", w.dx},
                       {"dy", w.dy},
                       {"dz", w.dz},
                       {"valid_fraction", w.valid_fraction},
                       {"accepted", w.accepted},
                       {"low_confidence", w.low_confidence}});
  }
  return {{"dx", a.dx}, {"dy", a.dy}, {"dz", a.dz}, {"window_px", a.window_px},
          {"manual", a.manual}, {"windows", windows}};
}

GlobalAlignment alignment_from_json(const nlohmann::json& j) {
  GlobalAlignment a;
  try {
    a.dx = j.at("dx").get<double>();
    a.dy = j.at("dy").get<double>();
    a.dz = j.at("dz").get<double>();
    a.window_px = j.value("window_px", 0);
    a.manual = j.value("manual", false);
    for (const auto& w : j.value("windows", nlohmann::json::array())) {
      WindowAlignment wa;
      wa.col = w.at("col").get<int>();
      wa.row = w.at("row").get<int>();
      wa.dx = w.at("dx").get<double>();
      wa.dy = w.at("dy").get<double>();
      wa.dz = w.at("dz").get<double>();
      wa.valid_fraction = w.at("valid_fraction").get<double>();
      wa.accepted = w.at("accepted").get<bool>();
      wa.low_confidence = w.value("low_confidence", false);
      a.windows.push_back(wa);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("alignment report: ") + e.what());
  }
  return a;
}

}  // namespace ctf3d
