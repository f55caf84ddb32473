#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "wallkin/volume.hpp"

namespace wallkin {

// ---------------------------------------------------------------------------
// Trilinear sampling on raw x-fastest buffers. `idx` is a continuous voxel
// coordinate; it is clamped to the voxel-centre bounding box [0, dims-1].
// ---------------------------------------------------------------------------

namespace detail {

struct TrilinearCell {
  std::array<std::size_t, 8> offsets;
  Vec3 frac;
  std::array<bool, 3> clamped;
};

inline TrilinearCell locate_cell(const Index3& dims, const Vec3& idx) {
  TrilinearCell cell{};
  std::array<int, 3> base{};
  for (int a = 0; a < 3; ++a) {
    const double hi = dims[a] - 1;
    double c = idx[a];
    cell.clamped[a] = !(c >= 0.0 && c <= hi);
    c = std::clamp(c, 0.0, hi);
    int b = static_cast<int>(std::floor(c));
    if (b >= dims[a] - 1) b = dims[a] - 2;
    base[a] = b;
    cell.frac[a] = c - b;
  }
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(dims[1]);
  const std::size_t o = base[2] * sz + base[1] * sy + base[0];
  cell.offsets = {o,           o + sx,           o + sy,      o + sx + sy,
                  o + sz,      o + sx + sz,      o + sy + sz, o + sx + sy + sz};
  return cell;
}

}  // namespace detail

template <typename T>
double sample_trilinear(std::span<const T> data, const Index3& dims, const Vec3& idx) {
  const auto cell = detail::locate_cell(dims, idx);
  const double fx = cell.frac.x(), fy = cell.frac.y(), fz = cell.frac.z();
  const auto v = [&](int n) { return static_cast<double>(data[cell.offsets[n]]); };
  const double c00 = v(0) + fx * (v(1) - v(0));
  const double c10 = v(2) + fx * (v(3) - v(2));
  const double c01 = v(4) + fx * (v(5) - v(4));
  const double c11 = v(6) + fx * (v(7) - v(6));
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

template <typename T>
double sample_trilinear(const std::vector<T>& data, const Index3& dims, const Vec3& idx) {
  return sample_trilinear(std::span<const T>(data), dims, idx);
}

/// Trilinear value plus its exact derivative with respect to the continuous
/// voxel coordinate. Clamped axes contribute a zero derivative.
template <typename T>
double sample_trilinear_with_gradient(std::span<const T> data, const Index3& dims,
                                      const Vec3& idx, Vec3& grad_idx) {
  const auto cell = detail::locate_cell(dims, idx);
  const double fx = cell.frac.x(), fy = cell.frac.y(), fz = cell.frac.z();
  const auto v = [&](int n) { return static_cast<double>(data[cell.offsets[n]]); };
  const double dx00 = v(1) - v(0), dx10 = v(3) - v(2), dx01 = v(5) - v(4), dx11 = v(7) - v(6);
  const double c00 = v(0) + fx * dx00;
  const double c10 = v(2) + fx * dx10;
  const double c01 = v(4) + fx * dx01;
  const double c11 = v(6) + fx * dx11;
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  const double gx0 = dx00 + fy * (dx10 - dx00);
  const double gx1 = dx01 + fy * (dx11 - dx01);
  grad_idx.x() = cell.clamped[0] ? 0.0 : gx0 + fz * (gx1 - gx0);
  grad_idx.y() = cell.clamped[1] ? 0.0 : (c10 - c00) + fz * ((c11 - c01) - (c10 - c00));
  grad_idx.z() = cell.clamped[2] ? 0.0 : c1 - c0;
  return c0 + fz * (c1 - c0);
}

/// Intensity at physical point `p` (mm), clamped to the voxel-centre box.
float sample_trilinear(const Volume3& v, const Vec3& p);

// ---------------------------------------------------------------------------
// Gaussian smoothing: separable, truncated at 3 sigma, normalised weights,
// renormalised at the borders.
// ---------------------------------------------------------------------------

/// Normalised 1-D kernel of odd length 2R+1 with R = ceil(3 sigma). sigma in voxels.
std::vector<double> gaussian_kernel(double sigma_voxels);

/// out = G * in on an x-fastest buffer. `sigma_voxels` per axis, 0 means identity.
void smooth_gaussian(std::span<const double> in, std::span<double> out, const Index3& dims,
                     const std::array<double, 3>& sigma_voxels);

/// out = G^T * in for the same operator as smooth_gaussian.
void smooth_gaussian_transpose(std::span<const double> in, std::span<double> out,
                               const Index3& dims, const std::array<double, 3>& sigma_voxels);

/// sigma in millimetres per axis.
Volume3 gaussian_smooth(const Volume3& v, const Vec3& sigma_mm);

/// Central differences inside, one-sided at the borders, in intensity/mm.
VectorVolume3 gradient_central(const Volume3& v);

/// Sub-volume [lo, hi) per axis; origin moves to the centre of voxel lo.
Volume3 crop(const Volume3& v, const Index3& lo, const Index3& hi);

/// Geometry of one pyramid level below `g`.
Geometry downsampled_geometry(const Geometry& g);

/// Smooth with sigma = 1 voxel, keep every second voxel. Requires dims >= 4.
Volume3 downsample2(const Volume3& v);

}  // namespace wallkin
