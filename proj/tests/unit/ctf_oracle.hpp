#pragma once

// Direct transcription of the per-region contrast procedure, written
// independently of the library so the two can be compared.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

inline double pct(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p / 100.0;
  const double lo = std::floor(h);
  const std::size_t i = static_cast<std::size_t>(lo);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - lo) * (v[i + 1] - v[i]);
}

inline double trimmed_mean(const std::vector<double>& v) {
  const double q1 = pct(v, 25), q3 = pct(v, 75), iqr = q3 - q1;
  double s = 0;
  int n = 0;
  for (double x : v) {
    if (iqr == 0 || (x >= q1 - 1.5 * iqr && x <= q3 + 1.5 * iqr)) {
      s += x;
      ++n;
    }
  }
  return s / n;
}

struct Subregions {
  std::vector<double> center, a, b;
};

inline double contrast(const Subregions& test_in, const Subregions& ref) {
  Subregions test = test_in;
  // Step 1: match tenth percentiles over the ground.
  const double floor_level = pct(ref.center, 10);
  const double offset = floor_level - pct(test.center, 10);
  for (auto* v : {&test.center, &test.a, &test.b})
    for (double& x : *v) x += offset;
  // Step 2: roof levels from the ninetieth percentiles, lower building wins.
  const double ref_top = std::min(pct(ref.a, 90), pct(ref.b, 90));
  const double test_top = std::min(pct(test.a, 90), pct(test.b, 90));
  for (auto* v : {&test.center, &test.a, &test.b})
    for (double& x : *v) x += (ref_top - test_top) / 2;
  const double top = std::min(pct(test.a, 90), pct(test.b, 90));
  // Step 3: clip, zero and average.
  auto level = [&](std::vector<double> v) {
    for (double& x : v) x = std::min(std::max(x, floor_level), std::max(top, floor_level)) - floor_level;
    return trimmed_mean(v);
  };
  const double a1 = level(test.a), a2 = level(test.b), b = level(test.center);
  const double t1 = a1 + b == 0 ? 0 : (a1 - b) / (a1 + b);
  const double t2 = a2 + b == 0 ? 0 : (a2 - b) / (a2 + b);
  return 0.5 * (t1 + t2);
}

}  // namespace oracle

#include <random>

namespace synthetic {

// Two buildings either side of a ground gap, sampled across the gap. The
// test profile is the reference blurred by a Gaussian of width `blur`, with
// noise and an arbitrary vertical offset. With a finite `max_blur_ratio`
// the blur stays below that fraction of the gap, so the gap is resolved and
// the building rectangles stand above the ground on average.
struct RegionPair {
  oracle::Subregions test, ref;
  double d = 0;
};

inline RegionPair random_region(std::mt19937& rng, double max_blur_ratio = 0.4) {
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> noise(0, 1);
  RegionPair out;
  out.d = 0.5 + 14.5 * u(rng);
  const double ground = -5 + 55 * u(rng);
  const double h1 = 3 + 22 * u(rng), h2 = 3 + 22 * u(rng);
  double blur = 0.2 + 2.8 * u(rng);
  if (std::isfinite(max_blur_ratio)) blur = (0.05 + (max_blur_ratio - 0.05) * u(rng)) * out.d;
  const double bias = -20 + 40 * u(rng);
  const double noise_sd = 0.3 * u(rng);
  const int along = 3 + static_cast<int>(8 * u(rng));
  const int across = 5 + static_cast<int>(20 * u(rng));
  const double half = out.d / 2;
  auto profile = [&](double x, double w) {
    auto step = [&](double t) { return w == 0 ? (t > 0 ? 1.0 : 0.0) : 0.5 * std::erfc(-t / (w * std::sqrt(2.0))); };
    return ground + h1 * step(-half - x) + h2 * step(x - half);
  };
  auto fill = [&](double x0, double x1, std::vector<double>& t, std::vector<double>& r) {
    for (int i = 0; i < across; ++i) {
      const double x = x0 + (x1 - x0) * (i + 0.5) / across;
      for (int k = 0; k < along; ++k) {
        r.push_back(profile(x, 0) + 0.02 * noise(rng));
        t.push_back(profile(x, blur) + bias + noise_sd * noise(rng));
      }
    }
  };
  fill(-half, half, out.test.center, out.ref.center);
  fill(-half - out.d, -half, out.test.a, out.ref.a);
  fill(half, half + out.d, out.test.b, out.ref.b);
  return out;
}

}  // namespace synthetic
