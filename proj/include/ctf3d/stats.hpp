#pragma once

#include <span>
#include <vector>

namespace ctf3d {

/// Linear-interpolated percentile, rank = p/100 * (n - 1) over the sorted
/// values. Throws on empty input, non-finite values or p outside [0, 100].
double percentile(std::span<const double> values, double p);

/// Same rule on data that is already sorted ascending.
double percentile_sorted(std::span<const double> sorted, double p);

inline double median(std::span<const double> values) { return percentile(values, 50.0); }

/// Mean of the samples inside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]. A zero IQR
/// keeps every sample.
double iqr_trimmed_mean(std::span<const double> values);

}  // namespace ctf3d
