#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wallkin/config.hpp"
#include "wallkin/point_cloud.hpp"
#include "wallkin/volume.hpp"

namespace wallkin {

/// Tubular phantom along the z (S) axis through the lateral centre.
struct PhantomSpec {
  Index3 dims{112, 112, 74};
  Vec3 spacing{0.63, 0.63, 1.0};
  double inner_radius_mm = 22.0;
  double outer_radius_mm = 25.0;
  double background = -50.0;
  double wall = 120.0;
  double lumen = 300.0;
  double blur_sigma_voxels = 0.8;
  double noise_sigma = 10.0;
  std::uint64_t rng_seed = 0;

  Geometry geometry() const;
  /// Axis point (lateral centre, first slice).
  Vec3 axis_point() const;
  /// Throws ValidationError naming the offending `phantom.*` key.
  void validate() const;
};

struct Phantom {
  Volume3 image;
  Volume3 wall_mask;  ///< 1 inside inner <= rho <= outer, else 0 (unblurred).
};

Phantom generate_phantom(const PhantomSpec& spec);

enum class AxialProfile { sin2, constant };

/// u(p) = s(rho) * profile(z) * (dr_max * rho_hat + axial_amplitude * axis)
/// where z is the position along the axis from axis_point and
/// profile(z) = sin^2(pi z / length) on [0, length], 0 outside.
/// s(rho) = min(rho / core_radius, 1) tapers the field inside the lumen so the
/// map stays invertible near the axis; with core_radius 0 it is 1 everywhere
/// except on the axis itself (rho < 1e-9 mm), where u = 0.
struct AnalyticField {
  std::string kind = "radial_inflation";
  double dr_max_mm = 1.0;
  AxialProfile profile = AxialProfile::sin2;
  Vec3 axis_point = Vec3::Zero();
  Vec3 axis_dir = Vec3::UnitZ();
  double length_mm = 73.0;
  double core_radius_mm = 5.0;
  double axial_amplitude_mm = 0.0;

  void validate() const;
  double profile_at(double z) const;
};

/// Radial inflation field matched to a phantom: axis through the phantom
/// centre, support covering the slices.
AnalyticField default_field(const PhantomSpec& spec, double dr_max_mm = 1.0);

Vec3 eval_field(const AnalyticField& f, const Vec3& p);

/// Backward displacement u- with p + u- mapped forward onto p, by the
/// fixed-point iteration u- <- -u(p + u-). Throws NumericError when the update
/// does not drop below tol_mm within max_iterations.
Vec3 invert_field(const AnalyticField& f, const Vec3& p, double tol_mm = 1e-3,
                  int max_iterations = 50);
Vec3 invert_field(const VectorVolume3& f, const Vec3& p, double tol_mm = 1e-3,
                  int max_iterations = 50);

/// output(x) = v(x + u-(x)) by trilinear sampling: a feature at p in v moves
/// to p + u(p).
Volume3 warp_volume(const Volume3& v, const AnalyticField& f);

std::vector<Vec3> ground_truth_at_points(const AnalyticField& f, const PointCloud& cloud);
/// Displacement of the material point that ends at each cloud point,
/// -invert_field(f, x). Used when the points live in the deformed frame.
std::vector<Vec3> ground_truth_at_deformed_points(const AnalyticField& f, const PointCloud& cloud);

/// Reads `phantom.*` keys on top of the defaults.
PhantomSpec phantom_from_config(const KeyValues& kv);
/// Reads `field.*` keys on top of default_field(spec).
AnalyticField field_from_config(const KeyValues& kv, const PhantomSpec& spec);

KeyValues field_to_config(const AnalyticField& f);
void save_field(const AnalyticField& f, const std::filesystem::path& path);
AnalyticField load_field(const std::filesystem::path& path);

}  // namespace wallkin
