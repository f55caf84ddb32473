#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace wallkin {

using Vec3 = Eigen::Vector3d;
using Index3 = std::array<int, 3>;

/// Axis-aligned sampling geometry shared by scalar and vector volumes.
///
/// Voxel (0,0,0) is centred at `origin`; voxel (i,j,k) is centred at
/// origin + (i,j,k) * spacing. Direction cosines are the identity.
struct Geometry {
  Index3 dims{2, 2, 2};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  double voxel_volume() const { return spacing.prod(); }

  std::size_t linear(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 center(int i, int j, int k) const {
    return origin + Vec3(i, j, k).cwiseProduct(spacing);
  }
  /// Continuous voxel coordinate of a physical point.
  Vec3 to_index(const Vec3& p) const { return (p - origin).cwiseQuotient(spacing); }
  /// Physical position of the last voxel centre.
  Vec3 far_corner() const { return center(dims[0] - 1, dims[1] - 1, dims[2] - 1); }

  /// Checks dims >= 2 and spacing > 0; throws ValidationError otherwise.
  void validate() const;
  /// Equal dims, and spacing/origin equal within `tol` millimetres.
  bool matches(const Geometry& other, double tol = 1e-6) const;
};

/// Dense scalar image, x-fastest, 32-bit intensities.
class Volume3 {
 public:
  Volume3() = default;
  explicit Volume3(const Geometry& geom, float fill = 0.0f);
  Volume3(const Geometry& geom, std::vector<float> data);

  const Geometry& geometry() const { return geom_; }
  const Index3& dims() const { return geom_.dims; }
  const Vec3& spacing() const { return geom_.spacing; }
  const Vec3& origin() const { return geom_.origin; }
  std::size_t size() const { return data_.size(); }

  float& operator()(int i, int j, int k) { return data_[geom_.linear(i, j, k)]; }
  float operator()(int i, int j, int k) const { return data_[geom_.linear(i, j, k)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Copy of the intensities widened to double.
  std::vector<double> to_double() const;

  float min_value() const;
  float max_value() const;

 private:
  Geometry geom_;
  std::vector<float> data_;
};

/// Three-channel volume on a scalar geometry (displacements in mm, gradients in
/// intensity/mm).
struct VectorVolume3 {
  Geometry geometry;
  std::array<std::vector<double>, 3> channels;

  VectorVolume3() = default;
  explicit VectorVolume3(const Geometry& geom);

  Vec3 at(std::size_t idx) const {
    return {channels[0][idx], channels[1][idx], channels[2][idx]};
  }
  void set(std::size_t idx, const Vec3& v) {
    channels[0][idx] = v.x();
    channels[1][idx] = v.y();
    channels[2][idx] = v.z();
  }
  /// Per-channel trilinear sample with the same clamping as sample_trilinear.
  Vec3 sample(const Vec3& p) const;
};

}  // namespace wallkin
