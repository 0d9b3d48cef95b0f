#include "ctf3d/ctf.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "ctf3d/error.hpp"
#include "ctf3d/geojson.hpp"
#include "ctf3d/log.hpp"
#include "ctf3d/stats.hpp"

namespace ctf3d {

using std::numbers::pi;

const char* to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::low_ref_ctf: return "low_ref_ctf";
    case RecordStatus::zero_test_ctf: return "zero_test_ctf";
    case RecordStatus::insufficient_samples: return "insufficient_samples";
  }
  return "?";
}

RecordStatus record_status_from_string(const std::string& s) {
  for (auto v : {RecordStatus::ok, RecordStatus::low_ref_ctf, RecordStatus::zero_test_ctf,
                 RecordStatus::insufficient_samples}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorKind::parse, "unknown record status '" + s + "'");
}

std::vector<double> sample_rect(const Raster& r, const OrientedRect& rect) {
  double c0 = std::numeric_limits<double>::infinity(), r0 = c0, c1 = -c0, r1 = -c0;
  for (Point2 p : rect.corners()) {
    const Point2 px = r.world_to_pixel(p);
    c0 = std::min(c0, px.x), c1 = std::max(c1, px.x);
    r0 = std::min(r0, px.y), r1 = std::max(r1, px.y);
  }
  const int col0 = std::max(0, static_cast<int>(std::floor(c0)) - 1);
  const int col1 = std::min(r.width() - 1, static_cast<int>(std::ceil(c1)) + 1);
  const int row0 = std::max(0, static_cast<int>(std::floor(r0)) - 1);
  const int row1 = std::min(r.height() - 1, static_cast<int>(std::ceil(r1)) + 1);
  std::vector<double> out;
  for (int row = row0; row <= row1; ++row) {
    for (int col = col0; col <= col1; ++col) {
      if (!r.valid(col, row)) continue;
      const Point2 l = rect.to_local(r.cell_center(col, row));
      if (std::abs(l.x) < rect.half_length && std::abs(l.y) < rect.half_width) out.push_back(r.at(col, row));
    }
  }
  return out;
}

RegionSamples sample_region(const Raster& r, const EvaluationRegion& region) {
  return {sample_rect(r, region.center), sample_rect(r, region.region_a), sample_rect(r, region.region_b)};
}

namespace {

void shift(RegionSamples& s, double by) {
  for (auto* v : {&s.center, &s.region_a, &s.region_b}) {
    for (double& x : *v) x += by;
  }
}

double roof_level(const RegionSamples& s) { return std::min(percentile(s.region_a, 90.0), percentile(s.region_b, 90.0)); }

bool enough(const RegionSamples& s, std::size_t n) {
  return s.center.size() >= n && s.region_a.size() >= n && s.region_b.size() >= n && n > 0;
}

}  // namespace

std::optional<LocalAlignment> local_align(const RegionSamples& test, const RegionSamples& ref,
                                          std::size_t min_samples) {
  if (!enough(test, min_samples) || !enough(ref, min_samples)) return std::nullopt;
  LocalAlignment out;
  out.test = test;
  out.ref = ref;
  out.zero_level = percentile(ref.center, 10.0);
  out.zero_offset = out.zero_level - percentile(test.center, 10.0);
  shift(out.test, out.zero_offset);

  out.ref_max = roof_level(ref);
  out.max_shift = 0.5 * (out.ref_max - roof_level(out.test));
  shift(out.test, out.max_shift);
  out.test_max = roof_level(out.test);
  return out;
}

RegionLevels region_levels(const RegionSamples& samples, double zero_level, double max_level) {
  auto level = [&](const std::vector<double>& v) {
    std::vector<double> clipped(v.size());
    // When the roof sits below the floor the clip range is empty and every
    // sample collapses onto the floor.
    const double hi = std::max(max_level, zero_level);
    for (std::size_t i = 0; i < v.size(); ++i) clipped[i] = std::clamp(v[i], zero_level, hi) - zero_level;
    return iqr_trimmed_mean(clipped);
  };
  RegionLevels l;
  l.a1 = level(samples.region_a);
  l.a2 = level(samples.region_b);
  l.b = level(samples.center);
  l.zero_level = zero_level;
  l.test_max = max_level;
  return l;
}

double contrast(const RegionLevels& l) {
  auto term = [&](double a) { return a + l.b == 0.0 ? 0.0 : (a - l.b) / (a + l.b); };
  return 0.5 * (term(l.a1) + term(l.a2));
}

CtfRecord compute_ctf(const Raster& test, const Raster& ref, const EvaluationRegion& region, const CtfConfig& config,
                      int region_id) {
  if (!test.same_grid(ref)) {
    throw Error(ErrorKind::invalid_argument, "test and reference rasters must share a grid; align the test first");
  }
  CtfRecord rec;
  rec.region_id = region_id;
  rec.region = region;
  const RegionSamples ts = sample_region(test, region);
  const RegionSamples rs = sample_region(ref, region);
  const auto test_al = local_align(ts, rs, config.min_samples);
  const auto ref_al = local_align(rs, rs, config.min_samples);
  if (!test_al || !ref_al) {
    rec.status = RecordStatus::insufficient_samples;
    return rec;
  }
  rec.levels_test = region_levels(test_al->test, test_al->zero_level, test_al->test_max);
  rec.levels_test.ref_max = test_al->ref_max;
  rec.levels_ref = region_levels(ref_al->test, ref_al->zero_level, ref_al->test_max);
  rec.levels_ref.ref_max = ref_al->ref_max;
  rec.c_test = contrast(rec.levels_test);
  rec.c_ref = contrast(rec.levels_ref);
  return rec;
}

std::vector<CtfRecord> compute_all_ctf(const Raster& test, const Raster& ref,
                                       const std::vector<EvaluationRegion>& regions, const CtfConfig& config) {
  std::vector<CtfRecord> out(regions.size());
  const auto n = static_cast<std::ptrdiff_t>(regions.size());
  // Errors inside the parallel loop are carried out and rethrown in order.
  std::vector<std::exception_ptr> errors(regions.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = compute_ctf(test, ref, regions[i], config, static_cast<int>(i) + 1);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<CtfRecord> filter_records(std::vector<CtfRecord> records, double ref_ctf_min) {
  for (auto& r : records) {
    if (r.status != RecordStatus::ok) continue;
    if (!(r.c_ref > ref_ctf_min)) {
      r.status = RecordStatus::low_ref_ctf;
    } else if (r.c_test == 0.0) {
      r.status = RecordStatus::zero_test_ctf;
    }
  }
  return records;
}

double ctf_model(double amp, double sigma, double d) {
  const double q = pi * sigma / d;
  return amp * std::exp(-q * q);
}

std::array<double, 2> ctf_model_gradient(double amp, double sigma, double d) {
  const double q = pi * sigma / d;
  const double e = std::exp(-q * q);
  return {e, -2.0 * amp * e * pi * pi * sigma / (d * d)};
}

namespace {

constexpr double kAmpMax = 1.5;
constexpr double kTiny = 1e-12;

double fit_cost(const std::vector<double>& d, const std::vector<double>& c, double amp, double sigma) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = c[i] - ctf_model(amp, sigma, d[i]);
    s += r * r;
  }
  return s;
}

}  // namespace

CtfModelFit fit_ctf_model(const std::vector<double>& d, const std::vector<double>& c, std::optional<FitInit> init) {
  if (d.size() != c.size()) throw Error(ErrorKind::invalid_argument, "fit input lengths differ");
  if (d.size() < 3) {
    throw Error(ErrorKind::numerical, fmt::format("model fit needs at least 3 valid records, got {}", d.size()));
  }
  std::vector<double> uniq(d);
  std::sort(uniq.begin(), uniq.end());
  if (std::unique(uniq.begin(), uniq.end()) - uniq.begin() < 2) {
    throw Error(ErrorKind::numerical, "model fit needs at least 2 distinct separations");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0) || !std::isfinite(c[i])) throw Error(ErrorKind::invalid_argument, "fit input out of range");
  }
  const double sigma_max = 10.0 * uniq.back();
  const double sigma_min = kTiny * uniq.back();

  double amp, sigma;
  if (init) {
    amp = init->amp;
    sigma = init->sigma;
  } else {
    amp = percentile(c, 95.0);
    sigma = median(d) * std::sqrt(std::log(std::max(amp / 0.2, 1.01))) / pi;
  }
  amp = std::clamp(amp, kTiny, kAmpMax);
  sigma = std::clamp(sigma, sigma_min, sigma_max);

  CtfModelFit fit;
  fit.n_points = static_cast<int>(d.size());
  double cost = fit_cost(d, c, amp, sigma);
  double lambda = 1e-3;
  constexpr int kMaxIter = 200;
  int it = 0;
  for (; it < kMaxIter; ++it) {
    // Normal equations of the 2-parameter problem.
    double jtj00 = 0, jtj01 = 0, jtj11 = 0, g0 = 0, g1 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto jac = ctf_model_gradient(amp, sigma, d[i]);
      const double r = c[i] - ctf_model(amp, sigma, d[i]);
      jtj00 += jac[0] * jac[0];
      jtj01 += jac[0] * jac[1];
      jtj11 += jac[1] * jac[1];
      g0 += jac[0] * r;
      g1 += jac[1] * r;
    }
    if (cost == 0.0) {
      fit.converged = true;
      break;
    }
    bool accepted = false;
    double new_cost = cost;
    while (lambda < 1e16) {
      const double a00 = jtj00 + lambda * std::max(jtj00, kTiny);
      const double a11 = jtj11 + lambda * std::max(jtj11, kTiny);
      const double det = a00 * a11 - jtj01 * jtj01;
      if (det > 0.0 && std::isfinite(det)) {
        const double step_amp = (a11 * g0 - jtj01 * g1) / det;
        const double step_sigma = (a00 * g1 - jtj01 * g0) / det;
        const double na = std::clamp(amp + step_amp, kTiny, kAmpMax);
        const double ns = std::clamp(sigma + step_sigma, sigma_min, sigma_max);
        new_cost = fit_cost(d, c, na, ns);
        if (new_cost < cost) {
          amp = na;
          sigma = ns;
          accepted = true;
          lambda = std::max(lambda / 10.0, 1e-12);
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted) {
      // No damping level improves the cost: a stationary point.
      fit.converged = true;
      break;
    }
    const double rel = (cost - new_cost) / std::max(cost, std::numeric_limits<double>::min());
    cost = new_cost;
    if (rel < 1e-10) {
      fit.converged = true;
      ++it;
      break;
    }
  }
  fit.iterations = it;
  fit.amp = amp;
  fit.sigma = sigma;
  fit.residual_rms = std::sqrt(cost / static_cast<double>(d.size()));

  double jtj00 = 0, jtj01 = 0, jtj11 = 0;
  for (double di : d) {
    const auto jac = ctf_model_gradient(amp, sigma, di);
    jtj00 += jac[0] * jac[0];
    jtj01 += jac[0] * jac[1];
    jtj11 += jac[1] * jac[1];
  }
  const double det = jtj00 * jtj11 - jtj01 * jtj01;
  const double s2 = cost / static_cast<double>(d.size() - 2);
  if (det > 1e-12 * std::max(jtj00 * jtj11, kTiny)) {
    fit.amp_se = std::sqrt(s2 * jtj11 / det);
    fit.sigma_se = std::sqrt(s2 * jtj00 / det);
  } else {
    fit.amp_se = fit.sigma_se = std::numeric_limits<double>::infinity();
  }
  const double bound_tol = 1e-9;
  fit.at_bound = amp >= kAmpMax * (1 - bound_tol) || amp <= 2 * kTiny || sigma >= sigma_max * (1 - bound_tol) ||
                 sigma <= 2 * sigma_min;
  fit.poorly_constrained = !std::isfinite(fit.sigma_se) || fit.at_bound || fit.sigma_se > fit.sigma ||
                           fit.amp_se > fit.amp;
  if (!fit.converged) log::warn(fmt::format("model fit did not converge in {} iterations; reporting the best parameters", kMaxIter));
  if (fit.poorly_constrained) log::warn(fmt::format("model fit is poorly constrained (sigma = {:.4g} +/- {:.3g})", sigma, fit.sigma_se));
  return fit;
}

CtfModelFit fit_ctf_model(const std::vector<CtfRecord>& records, std::optional<FitInit> init) {
  std::vector<double> d, c;
  for (const auto& r : records) {
    if (!r.valid()) continue;
    d.push_back(r.region.d);
    c.push_back(r.c_test);
  }
  return fit_ctf_model(d, c, init);
}

double threshold_distance(const CtfModelFit& fit, double threshold) {
  if (!(threshold > 0.0)) throw Error(ErrorKind::invalid_argument, "threshold must be positive");
  if (threshold >= fit.amp) {
    throw Error(ErrorKind::numerical, "threshold unreachable; model asymptote below threshold");
  }
  return pi * fit.sigma / std::sqrt(std::log(fit.amp / threshold));
}

VerticalAccuracy vertical_accuracy(const Raster& test, const Raster& ref, const Raster* mask) {
  if (!test.same_grid(ref) || (mask != nullptr && !mask->same_grid(ref))) {
    throw Error(ErrorKind::invalid_argument, "vertical accuracy needs rasters on a common grid");
  }
  std::vector<double> err;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const float t = test.values()[i], r = ref.values()[i];
    if (!test.is_valid_value(t) || !ref.is_valid_value(r)) continue;
    if (mask != nullptr) {
      const float m = mask->values()[i];
      if (!mask->is_valid_value(m) || m == 0.0F) continue;
    }
    err.push_back(static_cast<double>(t) - static_cast<double>(r));
  }
  if (err.empty()) throw Error(ErrorKind::numerical, "no overlapping valid cells for vertical accuracy");
  VerticalAccuracy va;
  va.n_valid = err.size();
  double ss = 0.0;
  std::vector<double> abs_err(err.size());
  for (std::size_t i = 0; i < err.size(); ++i) {
    ss += err[i] * err[i];
    abs_err[i] = std::abs(err[i]);
  }
  va.rmse = std::sqrt(ss / static_cast<double>(err.size()));
  va.median_error = median(err);
  va.le90 = percentile(abs_err, 90.0);
  return va;
}

void save_records_geojson(const std::vector<CtfRecord>& records, const Crs& crs, const std::filesystem::path& path) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json props = {{"region_id", r.region_id},
                            {"id_a", r.region.pair.id_a},
                            {"id_b", r.region.pair.id_b},
                            {"d_m", r.region.d},
                            {"ctf_test", r.c_test},
                            {"ctf_ref", r.c_ref},
                            {"valid", r.valid()},
                            {"reason", to_string(r.status)}};
    features.push_back({{"type", "Feature"},
                        {"properties", std::move(props)},
                        {"geometry", polygon_geometry({r.region.center.corners()}, crs)}});
  }
  write_json_file(feature_collection(std::move(features), crs), path);
}

namespace {

constexpr const char* kCsvHeader =
    "region_id,id_a,id_b,d_m,overlap_m,ctf_test,ctf_ref,valid,reason,"
    "test_a1,test_a2,test_b,zero_level,test_max,ref_max,ref_a1,ref_a2,ref_b";

}  // namespace

void save_records_csv(const std::vector<CtfRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    const auto& t = r.levels_test;
    const auto& f = r.levels_ref;
    out << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},"
                       "{:.17g},{:.17g},{:.17g}\n",
                       r.region_id, r.region.pair.id_a, r.region.pair.id_b, r.region.d, r.region.overlap, r.c_test,
                       r.c_ref, r.valid() ? 1 : 0, to_string(r.status), t.a1, t.a2, t.b, t.zero_level, t.test_max,
                       t.ref_max, f.a1, f.a2, f.b);
  }
  if (!out) throw Error(ErrorKind::io, "failed writing " + path.string());
}

std::vector<CtfRecord> load_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::missing_input, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kCsvHeader) throw Error(ErrorKind::parse, "unexpected CSV header in " + path.string());
  std::vector<CtfRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (cols.size() != 18) throw Error(ErrorKind::parse, fmt::format("{}:{}: expected 18 columns", path.string(), lineno));
    try {
      CtfRecord r;
      r.region_id = std::stoi(cols[0]);
      r.region.pair.id_a = std::stoll(cols[1]);
      r.region.pair.id_b = std::stoll(cols[2]);
      r.region.d = std::stod(cols[3]);
      r.region.overlap = std::stod(cols[4]);
      r.c_test = std::stod(cols[5]);
      r.c_ref = std::stod(cols[6]);
      r.status = record_status_from_string(cols[8]);
      r.levels_test = {std::stod(cols[9]), std::stod(cols[10]), std::stod(cols[11]),
                       std::stod(cols[12]), std::stod(cols[13]), std::stod(cols[14])};
      r.levels_ref = {std::stod(cols[15]), std::stod(cols[16]), std::stod(cols[17]), r.levels_test.zero_level,
                      r.levels_test.ref_max, r.levels_test.ref_max};
      out.push_back(r);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::parse, fmt::format("{}:{}: malformed number", path.string(), lineno));
    }
  }
  return out;
}

void save_fit_json(const CtfModelFit& fit, const std::vector<double>& thresholds, const std::filesystem::path& path) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json d_star = nlohmann::json::array();
  for (double t : thresholds) {
    nlohmann::json e = {{"threshold", t}};
    if (t > 0.0 && t < fit.amp) {
      e["d_star"] = threshold_distance(fit, t);
    } else {
      e["d_star"] = nullptr;
      e["note"] = "threshold unreachable; model asymptote below threshold";
    }
    d_star.push_back(e);
  }
  const nlohmann::json j = {{"amp_A", fit.amp},
                            {"sigma", fit.sigma},
                            {"amp_A_se", num(fit.amp_se)},
                            {"sigma_se", num(fit.sigma_se)},
                            {"residual_rms", fit.residual_rms},
                            {"n_points", fit.n_points},
                            {"iterations", fit.iterations},
                            {"converged", fit.converged},
                            {"at_bound", fit.at_bound},
                            {"poorly_constrained", fit.poorly_constrained},
                            {"thresholds", d_star}};
  write_json_file(j, path);
}

CtfModelFit load_fit_json(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    auto num = [&](const char* k) {
      return j.at(k).is_null() ? std::numeric_limits<double>::infinity() : j.at(k).get<double>();
    };
    CtfModelFit f;
    f.amp = j.at("amp_A").get<double>();
    f.sigma = j.at("sigma").get<double>();
    f.amp_se = num("amp_A_se");
    f.sigma_se = num("sigma_se");
    f.residual_rms = j.at("residual_rms").get<double>();
    f.n_points = j.at("n_points").get<int>();
    f.iterations = j.at("iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.at_bound = j.at("at_bound").get<bool>();
    f.poorly_constrained = j.at("poorly_constrained").get<bool>();
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, "malformed fit file " + path.string() + ": " + e.what());
  }
}

std::string ctf_plot_svg(const std::vector<CtfRecord>& records, const std::optional<CtfModelFit>& fit,
                         const PlotOptions& opt) {
  constexpr double W = 720, H = 480, L = 70, R = 20, T = 40, B = 60;
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : records) {
    if (r.valid()) pts.emplace_back(r.region.d, r.c_test);
  }
  double dmax = 1.0, dmin = std::numeric_limits<double>::infinity();
  for (const auto& [d, c] : pts) {
    dmax = std::max(dmax, d);
    dmin = std::min(dmin, d);
  }
  std::optional<double> d_star;
  if (fit && opt.threshold > 0.0 && opt.threshold < fit->amp) d_star = threshold_distance(*fit, opt.threshold);
  if (d_star) dmax = std::max(dmax, *d_star);
  dmax *= 1.05;
  if (!std::isfinite(dmin)) dmin = 0.1;
  const double x_lo = opt.log_x ? std::pow(10.0, std::floor(std::log10(std::max(std::min(dmin, d_star.value_or(dmin)), 1e-3))))
                                : 0.0;
  auto sx = [&](double d) {
    const double f = opt.log_x ? (std::log10(std::max(d, x_lo)) - std::log10(x_lo)) / (std::log10(dmax) - std::log10(x_lo))
                               : d / dmax;
    return L + f * (W - L - R);
  };
  double c_lo = 0.0, c_hi = 1.0;
  for (const auto& [d, c] : pts) {
    c_lo = std::min(c_lo, c);
    c_hi = std::max(c_hi, c);
  }
  auto sy = [&](double c) { return H - B - (c - c_lo) / (c_hi - c_lo) * (H - T - B); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", W / 2, opt.title);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", L, H - B, W - R);
  s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", L, T, H - B);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">separation d (m){}</text>\n", (L + W - R) / 2, H - 18,
                   opt.log_x ? ", log scale" : "");
  s += fmt::format("<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">CTF</text>\n",
                   (T + H - B) / 2);
  for (int k = 0; k <= 5; ++k) {
    const double c = c_lo + (c_hi - c_lo) * k / 5.0;
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", L - 6, sy(c) + 4, c);
  }
  if (opt.log_x) {
    for (double d = x_lo; d <= dmax; d *= 10.0) {
      s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:g}</text>\n", sx(d), H - B + 16, d);
    }
  } else {
    for (int k = 0; k <= 5; ++k) {
      const double d = dmax * k / 5.0;
      s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", sx(d), H - B + 16, d);
    }
  }
  for (const auto& [d, c] : pts) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"#1f77b4\" fill-opacity=\"0.6\"/>\n", sx(d),
                     sy(c));
  }
  if (fit) {
    std::string path;
    const double start = opt.log_x ? x_lo : dmax / 400.0;
    for (int k = 0; k <= 400; ++k) {
      const double d = opt.log_x ? start * std::pow(dmax / start, k / 400.0) : start + (dmax - start) * k / 400.0;
      path += fmt::format("{}{:.2f},{:.2f} ", k == 0 ? "M" : "L", sx(d), sy(ctf_model(fit->amp, fit->sigma, d)));
    }
    s += fmt::format("<path d=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n", path);
  }
  s += fmt::format("<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
                   L, sy(opt.threshold), W - R);
  if (d_star) {
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1}\" x2=\"{0:.2f}\" y2=\"{2}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n",
                     sx(*d_star), T, H - B);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\">d* = {:.3g} m</text>\n", sx(*d_star) + 5, T + 14, *d_star);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace ctf3d
