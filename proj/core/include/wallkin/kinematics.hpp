#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wallkin/control_grid.hpp"
#include "wallkin/point_cloud.hpp"
#include "wallkin/volume.hpp"

namespace wallkin {

struct Decomposition {
  double u_normal = 0.0;
  Vec3 tangential = Vec3::Zero();
};

/// Splits d into its component along the unit normal n and the remainder.
Decomposition decompose_displacement(const Vec3& d, const Vec3& n);

/// Circumferential strain u_normal / radius.
double strain_at_point(double u_normal, double radius);

/// Green strain (E_rr, E_tt, E_zz) of a uniformly expanding incompressible
/// cylinder with circumferential stretch 1 + eps.
Vec3 green_tensor(double eps);

/// Linear-interpolation percentile: rank (n-1) p / 100 on the sorted values.
double percentile(std::span<const double> values, double p);

struct ChannelStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double sample_std = 0.0;  ///< n - 1 denominator; 0 for a single value.
  std::size_t count = 0;
};

ChannelStats summary_stats(std::span<const double> values);

struct WallKinematics {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Vec3> displacement;
  std::vector<double> u_normal;
  std::vector<double> t_magnitude;
  std::vector<double> radius;
  std::vector<double> strain;
  std::vector<Vec3> green;  ///< (E_rr, E_tt, E_zz)
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return points.size(); }
};

struct KinematicsSummary {
  double U_o = 0.0;    ///< 99th percentile of |displacement|.
  double u_o = 0.0;    ///< 99th percentile of |u_normal|.
  double eps_o = 0.0;  ///< 99th percentile of |strain|.
  bool signed_percentiles = false;
  ChannelStats magnitude;
  ChannelStats u_normal;
  ChannelStats t_magnitude;
  ChannelStats strain;
  ChannelStats E_rr;
  ChannelStats E_tt;
  std::size_t valid_count = 0;
  std::size_t invalid_count = 0;
};

using DisplacementFn = std::function<Vec3(const Vec3&)>;

struct KinematicsOptions {
  double sign = 1.0;                ///< +1 or -1, applied to the sampled field.
  bool signed_percentiles = false;  ///< Percentiles of signed rather than absolute values.
  double percentile = 99.0;
};

/// Samples `field` at every valid cloud point (normals and radii required) and
/// derives decomposition, strain and Green tensor. Invalid points carry zeros
/// and are left out of the summary.
WallKinematics compute_wall_kinematics(const PointCloud& cloud, const DisplacementFn& field,
                                       const KinematicsOptions& opts = {});
/// Same for a control grid or dense field; throws ValidationError when a point
/// lies outside the field's domain by more than half a voxel (frame mismatch).
WallKinematics compute_wall_kinematics(const PointCloud& cloud, const ControlGrid& field,
                                       const KinematicsOptions& opts = {});
WallKinematics compute_wall_kinematics(const PointCloud& cloud, const VectorVolume3& field,
                                       const KinematicsOptions& opts = {});

/// Throws ValidationError when no point is valid.
KinematicsSummary summarize(const WallKinematics& kin, const KinematicsOptions& opts = {});

/// Per-point channels as cloud attributes: disp_x, disp_y, disp_z, u_normal,
/// t_magnitude, strain, E_rr, E_tt.
PointCloud to_point_cloud(const WallKinematics& kin);
/// Inverse of to_point_cloud; throws ValidationError if a channel is missing.
WallKinematics from_point_cloud(const PointCloud& cloud);

std::string summary_to_json(const KinematicsSummary& s);
void save_summary_json(const KinematicsSummary& s, const std::filesystem::path& path);

}  // namespace wallkin
