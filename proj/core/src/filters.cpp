#include "wallkin/filters.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "wallkin/error.hpp"
#include "wallkin/parallel.hpp"

namespace wallkin {

float sample_trilinear(const Volume3& v, const Vec3& p) {
  return static_cast<float>(sample_trilinear(v.data(), v.dims(), v.geometry().to_index(p)));
}

std::vector<double> gaussian_kernel(double sigma_voxels) {
  if (!(sigma_voxels > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_voxels));
  std::vector<double> w(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    w[i + radius] = std::exp(-0.5 * (i * i) / (sigma_voxels * sigma_voxels));
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= sum;
  return w;
}

namespace {

// Applies the renormalised 1-D operator (or its transpose) along `axis`.
void convolve_axis(std::span<const double> in, std::span<double> out, const Index3& dims,
                   int axis, const std::vector<double>& w, bool transpose) {
  const int n = dims[axis];
  const int radius = static_cast<int>(w.size() / 2);
  const std::size_t stride = axis == 0 ? 1
                             : axis == 1 ? static_cast<std::size_t>(dims[0])
                                         : static_cast<std::size_t>(dims[0]) * dims[1];
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::size_t lines = static_cast<std::size_t>(dims[a1]) * dims[a2];

  // Per-position normaliser: sum of the kernel weights that fall inside the line.
  std::vector<double> norm(n);
  for (int i = 0; i < n; ++i) {
    double z = 0.0;
    for (int t = -radius; t <= radius; ++t) {
      if (i + t >= 0 && i + t < n) z += w[t + radius];
    }
    norm[i] = z;
  }

  const std::size_t chunks = std::min<std::size_t>(lines, 64);
  parallel_chunks(lines, chunks, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<double> line(n), res(n);
    for (std::size_t l = begin; l < end; ++l) {
      const std::size_t u = l % dims[a1];
      const std::size_t v = l / dims[a1];
      std::size_t base = 0;
      if (axis == 0) base = v * dims[0] * dims[1] + u * dims[0];
      if (axis == 1) base = v * dims[0] * dims[1] + u;
      if (axis == 2) base = v * dims[0] + u;
      for (int i = 0; i < n; ++i) line[i] = in[base + i * stride];
      if (transpose) {
        for (int i = 0; i < n; ++i) line[i] /= norm[i];
      }
      for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - radius);
        const int hi = std::min(n - 1, i + radius);
        double acc = 0.0;
        for (int j = lo; j <= hi; ++j) acc += w[j - i + radius] * line[j];
        res[i] = transpose ? acc : acc / norm[i];
      }
      for (int i = 0; i < n; ++i) out[base + i * stride] = res[i];
    }
  });
}

void smooth_impl(std::span<const double> in, std::span<double> out, const Index3& dims,
                 const std::array<double, 3>& sigma, bool transpose) {
  const std::size_t total = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (in.size() != total || out.size() != total) {
    throw_validation("smooth_gaussian: buffer size does not match dims");
  }
  std::vector<double> tmp(in.begin(), in.end());
  std::vector<double> next(total);
  for (int axis = 0; axis < 3; ++axis) {
    if (!(sigma[axis] > 0.0)) continue;
    convolve_axis(tmp, next, dims, axis, gaussian_kernel(sigma[axis]), transpose);
    tmp.swap(next);
  }
  std::copy(tmp.begin(), tmp.end(), out.begin());
}

}  // namespace

void smooth_gaussian(std::span<const double> in, std::span<double> out, const Index3& dims,
                     const std::array<double, 3>& sigma_voxels) {
  smooth_impl(in, out, dims, sigma_voxels, false);
}

void smooth_gaussian_transpose(std::span<const double> in, std::span<double> out,
                               const Index3& dims, const std::array<double, 3>& sigma_voxels) {
  smooth_impl(in, out, dims, sigma_voxels, true);
}

Volume3 gaussian_smooth(const Volume3& v, const Vec3& sigma_mm) {
  std::array<double, 3> sigma_vox{};
  for (int a = 0; a < 3; ++a) {
    if (sigma_mm[a] < 0.0) throw_validation("gaussian_smooth: sigma must be >= 0");
    sigma_vox[a] = sigma_mm[a] / v.spacing()[a];
  }
  const auto in = v.to_double();
  std::vector<double> out(in.size());
  smooth_gaussian(in, out, v.dims(), sigma_vox);
  return Volume3(v.geometry(), std::vector<float>(out.begin(), out.end()));
}

VectorVolume3 gradient_central(const Volume3& v) {
  const auto& g = v.geometry();
  VectorVolume3 grad(g);
  const auto& d = g.dims;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        const Index3 at{i, j, k};
        const std::size_t idx = g.linear(i, j, k);
        for (int a = 0; a < 3; ++a) {
          Index3 lo = at, hi = at;
          if (at[a] > 0) --lo[a];
          if (at[a] < d[a] - 1) ++hi[a];
          const double num = static_cast<double>(v(hi[0], hi[1], hi[2])) -
                             static_cast<double>(v(lo[0], lo[1], lo[2]));
          grad.channels[a][idx] = num / ((hi[a] - lo[a]) * g.spacing[a]);
        }
      }
    }
  }
  return grad;
}

Volume3 crop(const Volume3& v, const Index3& lo, const Index3& hi) {
  const auto& d = v.dims();
  Geometry g = v.geometry();
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < 0 || hi[a] > d[a] || lo[a] >= hi[a]) {
      throw_validation("crop: window [" + std::to_string(lo[a]) + ", " + std::to_string(hi[a]) +
                       ") out of range on axis " + std::to_string(a));
    }
    g.dims[a] = hi[a] - lo[a];
    g.origin[a] = v.origin()[a] + lo[a] * v.spacing()[a];
  }
  Volume3 out(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) out(i, j, k) = v(i + lo[0], j + lo[1], k + lo[2]);
  return out;
}

Geometry downsampled_geometry(const Geometry& g) {
  Geometry out = g;
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] < 4) throw_validation("downsample2: dims must be >= 4 on every axis");
    out.dims[a] = (g.dims[a] + 1) / 2;
    out.spacing[a] = 2.0 * g.spacing[a];
  }
  return out;
}

Volume3 downsample2(const Volume3& v) {
  const Geometry g = downsampled_geometry(v.geometry());
  const Volume3 smooth = gaussian_smooth(v, v.spacing());
  Volume3 out(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) out(i, j, k) = smooth(2 * i, 2 * j, 2 * k);
  return out;
}

}  // namespace wallkin
