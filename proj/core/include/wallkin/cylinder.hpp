#pragma once

#include <cstdint>
#include <span>

#include "wallkin/point_cloud.hpp"

namespace wallkin {

struct CurvatureParams {
  int k_neighbors = 60;
  double inlier_threshold_mm = 0.5;
  int max_iterations = 500;
  double axis_cone_deg = 30.0;
  Vec3 reference_axis = Vec3::UnitZ();  ///< Inferior-superior (S) axis.
  double r_min_mm = 5.0;
  double r_max_mm = 100.0;
  std::uint64_t rng_seed = 0;
  /// Adaptive stopping: quit once an all-inlier sample has been drawn with this
  /// probability (standard RANSAC trial bound), never beyond max_iterations.
  double confidence = 0.99;
  /// A fit that explains fewer than this share of the neighbourhood is failed.
  double min_inlier_fraction = 0.5;

  void validate() const;
};

struct CylinderFit {
  bool ok = false;
  Vec3 axis_point = Vec3::Zero();
  Vec3 axis_dir = Vec3::UnitZ();
  double radius = 0.0;
  int inlier_count = 0;
  double msac_score = 0.0;
  int iterations = 0;
};

/// Distance of p from the fitted surface, |dist(p, axis) - radius|.
double cylinder_residual(const CylinderFit& fit, const Vec3& p);

/// Orientation-constrained MSAC cylinder fit.
///
/// Hypotheses come from two points and their normals when `normals` is not
/// empty, otherwise from five points (axis from the scatter eigenvector nearest
/// the reference axis, projected into the cone; radius from an algebraic circle fit).
/// Hypotheses whose axis leaves the cone around params.reference_axis, or
/// whose radius leaves [r_min, r_max], are discarded. Score is
/// sum min(res^2, t^2). The winner is refined over its inliers by alternating a
/// geometric circle fit in the plane normal to the axis with a Gauss-Newton
/// update of the axis direction, three times. `seed` overrides params.rng_seed.
CylinderFit fit_cylinder_msac(std::span<const Vec3> points, std::span<const Vec3> normals,
                              const CurvatureParams& params, std::uint64_t seed);
CylinderFit fit_cylinder_msac(std::span<const Vec3> points, std::span<const Vec3> normals,
                              const CurvatureParams& params);

/// Fits a cylinder to the k-neighbourhood of every valid point. Failed fits
/// are filled once with the median radius of their valid neighbours; anything
/// still unresolved stays invalid. Throws NumericError when more than half of
/// the fits fail.
PointCloud radius_of_curvature_field(const PointCloud& cloud, const CurvatureParams& params);

/// Per-point seed derived from a base seed (splitmix64).
std::uint64_t split_seed(std::uint64_t base, std::uint64_t index);

}  // namespace wallkin
