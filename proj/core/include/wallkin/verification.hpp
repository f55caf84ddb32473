#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wallkin/kinematics.hpp"
#include "wallkin/volume.hpp"

namespace wallkin {

/// 1 - sum (e - t)^2 / sum (t - mean t)^2, against the identity line y = x.
double r_squared_identity(std::span<const double> truth, std::span<const double> estimate);

enum class NrmseNorm { range, std_dev };

/// RMSE divided by the truth range (or its sample standard deviation).
double nrmse(std::span<const double> truth, std::span<const double> estimate,
             NrmseNorm norm = NrmseNorm::range);

/// Angle in degrees, or nullopt when either vector is shorter than 1e-12.
std::optional<double> angle_between(const Vec3& a, const Vec3& b);

/// n pairs (percentile(truth, p_i), percentile(estimate, p_i)) with p_i evenly
/// spaced over [0.5, 99.5].
std::vector<std::pair<double, double>> qq_pairs(std::span<const double> truth,
                                                std::span<const double> estimate, int n);

struct Histogram {
  std::vector<double> edges;  ///< bins + 1 values.
  std::vector<std::size_t> counts;
  double mu = 0.0;
  double sigma = 0.0;
};

/// Equal-width bins over [min, max] and a moment-matched normal fit. Identical
/// values give one degenerate bin and sigma 0.
Histogram histogram_gaussian_fit(std::span<const double> diffs, int bins);

struct ChannelMetrics {
  std::string name;
  std::size_t n_points = 0;
  std::optional<double> r_squared;  ///< nullopt when the truth has no spread.
  std::optional<double> nrmse;
  double truth_p99 = 0.0;
  double estimate_p99 = 0.0;
};

struct ReportOptions {
  NrmseNorm nrmse_norm = NrmseNorm::range;
  int qq_points = 99;
  int histogram_bins = 40;
};

struct VerificationReport {
  std::vector<ChannelMetrics> channels;  ///< magnitude, normal, tangential, strain.
  double strain_p99_truth = 0.0;
  double strain_p99_estimate = 0.0;
  double strain_p99_relative_difference = 0.0;
  std::vector<std::pair<double, double>> qq;  ///< normal displacement.
  Histogram histogram;                       ///< of normal displacement errors.
  double paired_t_statistic = 0.0;           ///< normal channel, informational.
  std::optional<double> mean_abs_intensity_difference;
  /// Scatter data for external plotting, one row per valid point.
  std::vector<double> truth_normal, estimate_normal;
  std::vector<std::optional<double>> angles_deg;

  const ChannelMetrics& channel(const std::string& name) const;
};

/// Compares kinematics of the same point set. Throws ValidationError when the
/// point sets or validity masks differ.
VerificationReport build_report(const WallKinematics& truth, const WallKinematics& estimate,
                                const ReportOptions& opts = {});

/// Mean |a - b| over all voxels; the geometries must match.
double mean_abs_intensity_difference(const Volume3& a, const Volume3& b);

std::string report_to_json(const VerificationReport& r);
void save_report_json(const VerificationReport& r, const std::filesystem::path& path);
/// Writes scatter.csv, qq.csv and histogram.csv into `dir`.
void save_report_csv(const VerificationReport& r, const std::filesystem::path& dir);
/// Writes a matplotlib script that plots the CSVs next to it.
void save_plot_script(const std::filesystem::path& path);

}  // namespace wallkin
