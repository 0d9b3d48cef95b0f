#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctf3d/raster.hpp"
#include "ctf3d/regions.hpp"

namespace ctf3d {

enum class RecordStatus { ok, low_ref_ctf, zero_test_ctf, insufficient_samples };

const char* to_string(RecordStatus s);
RecordStatus record_status_from_string(const std::string& s);

/// Elevation levels behind one contrast value, in meters above zero_level.
struct RegionLevels {
  double a1 = 0.0;  // building rectangle a
  double a2 = 0.0;  // building rectangle b
  double b = 0.0;   // ground rectangle between them
  double zero_level = 0.0;
  double test_max = 0.0;
  double ref_max = 0.0;
};

/// Valid raster samples inside the three rectangles, in row-major cell order.
struct RegionSamples {
  std::vector<double> center;
  std::vector<double> region_a;
  std::vector<double> region_b;
};

/// Cells whose centers lie strictly inside the rectangle.
std::vector<double> sample_rect(const Raster& r, const OrientedRect& rect);
RegionSamples sample_region(const Raster& r, const EvaluationRegion& region);

struct LocalAlignment {
  RegionSamples test;  // shifted test samples
  RegionSamples ref;
  double zero_offset = 0.0;  // first shift: matches the ground floors
  double max_shift = 0.0;    // second shift: splits the roof-level difference
  double zero_level = 0.0;
  double test_max = 0.0;  // after both shifts
  double ref_max = 0.0;
};

struct CtfConfig {
  std::size_t min_samples = 5;
  double ref_ctf_min = 0.95;
};

/// Centers the test samples between the reference floor and roof levels.
/// Returns nullopt when a rectangle has fewer than min_samples valid cells
/// in either raster.
std::optional<LocalAlignment> local_align(const RegionSamples& test, const RegionSamples& ref,
                                          std::size_t min_samples = 5);

/// Clips to [zero_level, max_level], lifts by -zero_level and takes the
/// IQR-trimmed mean of each rectangle.
RegionLevels region_levels(const RegionSamples& samples, double zero_level, double max_level);

/// Mean of the two building-versus-ground contrasts. A term whose
/// denominator is zero contributes zero.
double contrast(const RegionLevels& l);

struct CtfRecord {
  int region_id = 0;  // 1-based position in the region list
  EvaluationRegion region;
  double c_test = 0.0;
  double c_ref = 0.0;
  RegionLevels levels_test;
  RegionLevels levels_ref;
  RecordStatus status = RecordStatus::ok;
  bool valid() const { return status == RecordStatus::ok; }
};

/// Both rasters must share a grid.
CtfRecord compute_ctf(const Raster& test, const Raster& ref, const EvaluationRegion& region,
                      const CtfConfig& config = {}, int region_id = 0);
std::vector<CtfRecord> compute_all_ctf(const Raster& test, const Raster& ref,
                                       const std::vector<EvaluationRegion>& regions, const CtfConfig& config = {});

/// Marks records with c_ref <= ref_ctf_min or c_test exactly zero. Records
/// are kept in place; already-invalid ones are left alone.
std::vector<CtfRecord> filter_records(std::vector<CtfRecord> records, double ref_ctf_min);

/// amp * exp(-(pi * sigma / d)^2)
double ctf_model(double amp, double sigma, double d);
/// Partial derivatives of ctf_model with respect to (amp, sigma).
std::array<double, 2> ctf_model_gradient(double amp, double sigma, double d);

struct CtfModelFit {
  double amp = 0.0;
  double sigma = 0.0;
  double amp_se = 0.0;  // standard errors from the Jacobian at the optimum
  double sigma_se = 0.0;
  double residual_rms = 0.0;
  int n_points = 0;
  int iterations = 0;
  bool converged = false;
  bool at_bound = false;
  bool poorly_constrained = false;
};

struct FitInit {
  double amp = 0.0;
  double sigma = 0.0;
};

/// Levenberg-Marquardt fit of ctf_model to (d, c) pairs.
/// Throws Error(numerical) with fewer than 3 points or fewer than 2 distinct d.
CtfModelFit fit_ctf_model(const std::vector<double>& d, const std::vector<double>& c,
                          std::optional<FitInit> init = std::nullopt);
/// Fits the valid records.
CtfModelFit fit_ctf_model(const std::vector<CtfRecord>& records, std::optional<FitInit> init = std::nullopt);

/// Distance at which the fitted model reaches `threshold`.
double threshold_distance(const CtfModelFit& fit, double threshold);

struct VerticalAccuracy {
  double rmse = 0.0;
  double median_error = 0.0;
  double le90 = 0.0;
  std::size_t n_valid = 0;
};

/// Statistics of test - ref over cells valid in both (and nonzero in the
/// mask, when given).
VerticalAccuracy vertical_accuracy(const Raster& test, const Raster& ref, const Raster* mask = nullptr);

void save_records_geojson(const std::vector<CtfRecord>& records, const Crs& crs, const std::filesystem::path& path);
void save_records_csv(const std::vector<CtfRecord>& records, const std::filesystem::path& path);
std::vector<CtfRecord> load_records_csv(const std::filesystem::path& path);

void save_fit_json(const CtfModelFit& fit, const std::vector<double>& thresholds, const std::filesystem::path& path);
CtfModelFit load_fit_json(const std::filesystem::path& path);

struct PlotOptions {
  bool log_x = false;
  double threshold = 0.2;
  std::string title = "Contrast versus building separation";
};

/// Scatter of valid records with the fitted curve, the threshold line and
/// the distance where they meet.
std::string ctf_plot_svg(const std::vector<CtfRecord>& records, const std::optional<CtfModelFit>& fit,
                         const PlotOptions& options = {});

}  // namespace ctf3d
