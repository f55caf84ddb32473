#pragma once

#include <filesystem>
#include <vector>

#include "wallkin/volume.hpp"

namespace wallkin {

/// Regular lattice of control displacements anchored to an image geometry.
///
/// Node (a,b,c) sits at anchor.origin + (a*K1*d1, b*K2*d2, c*K3*d3) where K is
/// the spacing in voxels and d the voxel spacing. The lattice always reaches
/// the last voxel centre, adding one layer past it when (dims-1) is not a
/// multiple of K. Displacements (mm) are stored x-fastest.
class ControlGrid {
 public:
  ControlGrid() = default;
  ControlGrid(const Geometry& anchor, const Index3& spacing_voxels);

  const Geometry& anchor() const { return anchor_; }
  const Index3& spacing_voxels() const { return spacing_voxels_; }
  const Index3& grid_dims() const { return grid_dims_; }
  std::size_t size() const { return displacements_.size(); }

  /// Node spacing in millimetres.
  Vec3 spacing_mm() const { return anchor_.spacing.cwiseProduct(Vec3(spacing_voxels_[0], spacing_voxels_[1], spacing_voxels_[2])); }
  /// Cell volume eta = v * K1 * K2 * K3.
  double cell_volume() const {
    return anchor_.voxel_volume() * spacing_voxels_[0] * spacing_voxels_[1] * spacing_voxels_[2];
  }

  std::size_t linear(int a, int b, int c) const {
    return (static_cast<std::size_t>(c) * grid_dims_[1] + b) * grid_dims_[0] + a;
  }
  Vec3 node_position(int a, int b, int c) const {
    return anchor_.origin + Vec3(a, b, c).cwiseProduct(spacing_mm());
  }

  std::vector<Vec3>& displacements() { return displacements_; }
  const std::vector<Vec3>& displacements() const { return displacements_; }
  Vec3& at(int a, int b, int c) { return displacements_[linear(a, b, c)]; }
  const Vec3& at(int a, int b, int c) const { return displacements_[linear(a, b, c)]; }

  double max_displacement() const;

 private:
  Geometry anchor_;
  Index3 spacing_voxels_{1, 1, 1};
  Index3 grid_dims_{2, 2, 2};
  std::vector<Vec3> displacements_;
};

/// First-order B-spline (trilinear) interpolation of the control displacements
/// at physical point p. Points outside the lattice hull are clamped to it.
Vec3 interpolate_displacement(const ControlGrid& g, const Vec3& p);

/// Per-voxel displacement field on `geom`, which must equal the grid anchor.
VectorVolume3 dense_field(const ControlGrid& g, const Geometry& geom);

/// Resamples `coarse` onto a new lattice anchored to `fine`.
ControlGrid resample_grid(const ControlGrid& coarse, const Geometry& fine,
                          const Index3& spacing_voxels);

/// Writes a text header `path` plus raw little-endian float64 displacements
/// (x-fastest node order, components interleaved).
///
/// Header keys, in order: kind, grid_dims, spacing_voxels, anchor_dims,
/// anchor_spacing_mm, anchor_origin_mm, data_file.
void save_control_grid(const ControlGrid& g, const std::filesystem::path& path);
ControlGrid load_control_grid(const std::filesystem::path& path);

}  // namespace wallkin
