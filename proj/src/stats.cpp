#include "ctf3d/stats.hpp"

#include <algorithm>
#include <cmath>

#include "ctf3d/error.hpp"

namespace ctf3d {

double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorKind::invalid_argument, "percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(ErrorKind::invalid_argument, "percentile p outside [0, 100]");
  const double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double p) {
  std::vector<double> v(values.begin(), values.end());
  if (std::any_of(v.begin(), v.end(), [](double x) { return !std::isfinite(x); })) {
    throw Error(ErrorKind::invalid_argument, "percentile input holds a non-finite value");
  }
  std::sort(v.begin(), v.end());
  return percentile_sorted(v, p);
}

double iqr_trimmed_mean(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double q1 = percentile_sorted(v, 25.0);
  const double q3 = percentile_sorted(v, 75.0);
  const double iqr = q3 - q1;
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (iqr > 0.0 && (x < q1 - 1.5 * iqr || x > q3 + 1.5 * iqr)) continue;
    sum += x;
    ++n;
  }
  return sum / static_cast<double>(n);
}

}  // namespace ctf3d
