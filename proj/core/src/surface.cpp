#include "wallkin/surface.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "wallkin/error.hpp"
#include "wallkin/kdtree.hpp"

namespace wallkin {
namespace {

PointCloud boundary_voxels(const Volume3& mask, const std::vector<std::uint8_t>& inside) {
  const auto& g = mask.geometry();
  const auto& d = g.dims;
  PointCloud cloud;
  bool any_outside = false;
  for (auto v : inside) any_outside |= v == 0;
  for (int k = 0; k < d[2]; ++k) {
    for (int j = 0; j < d[1]; ++j) {
      for (int i = 0; i < d[0]; ++i) {
        if (!inside[g.linear(i, j, k)]) continue;
        const std::array<Index3, 6> nb{{{i - 1, j, k}, {i + 1, j, k}, {i, j - 1, k},
                                        {i, j + 1, k}, {i, j, k - 1}, {i, j, k + 1}}};
        bool boundary = false;
        for (const auto& n : nb) {
          if (n[0] < 0 || n[1] < 0 || n[2] < 0 || n[0] >= d[0] || n[1] >= d[1] || n[2] >= d[2]) {
            continue;
          }
          if (!inside[g.linear(n[0], n[1], n[2])]) {
            boundary = true;
            break;
          }
        }
        if (boundary) cloud.add_point(g.center(i, j, k));
      }
    }
  }
  if (cloud.size() == 0 || !any_outside) {
    throw_validation("extract_wall_points: mask has no surface at iso level");
  }
  return cloud;
}

std::vector<std::uint8_t> threshold(const Volume3& mask, double iso) {
  std::vector<std::uint8_t> inside(mask.size());
  const auto data = mask.data();
  for (std::size_t i = 0; i < inside.size(); ++i) inside[i] = data[i] > iso ? 1 : 0;
  return inside;
}

}  // namespace

PointCloud extract_wall_points(const Volume3& mask, double iso) {
  return boundary_voxels(mask, threshold(mask, iso));
}

PointCloud extract_outer_wall_points(const Volume3& mask, double iso, int slice_axis) {
  if (slice_axis < 0 || slice_axis > 2) throw_validation("slice_axis must be 0, 1 or 2");
  const auto& g = mask.geometry();
  auto inside = threshold(mask, iso);
  const int u = slice_axis == 0 ? 1 : 0;
  const int v = slice_axis == 2 ? 1 : 2;
  const int nu = g.dims[u], nv = g.dims[v];
  std::vector<std::uint8_t> reached(static_cast<std::size_t>(nu) * nv);
  std::vector<std::pair<int, int>> stack;
  for (int s = 0; s < g.dims[slice_axis]; ++s) {
    auto lin = [&](int a, int b) {
      Index3 idx{};
      idx[slice_axis] = s;
      idx[u] = a;
      idx[v] = b;
      return g.linear(idx[0], idx[1], idx[2]);
    };
    std::fill(reached.begin(), reached.end(), 0);
    stack.clear();
    auto seed = [&](int a, int b) {
      if (!inside[lin(a, b)] && !reached[b * nu + a]) {
        reached[b * nu + a] = 1;
        stack.emplace_back(a, b);
      }
    };
    for (int a = 0; a < nu; ++a) {
      seed(a, 0);
      seed(a, nv - 1);
    }
    for (int b = 0; b < nv; ++b) {
      seed(0, b);
      seed(nu - 1, b);
    }
    while (!stack.empty()) {
      const auto [a, b] = stack.back();
      stack.pop_back();
      if (a > 0) seed(a - 1, b);
      if (a + 1 < nu) seed(a + 1, b);
      if (b > 0) seed(a, b - 1);
      if (b + 1 < nv) seed(a, b + 1);
    }
    for (int b = 0; b < nv; ++b)
      for (int a = 0; a < nu; ++a)
        if (!reached[b * nu + a]) inside[lin(a, b)] = 1;
  }
  return boundary_voxels(mask, inside);
}

PointCloud estimate_normals(const PointCloud& cloud, int k) {
  if (k < 3) throw_validation("estimate_normals: k must be >= 3");
  if (cloud.size() < static_cast<std::size_t>(k)) {
    throw_validation("estimate_normals: fewer points than k");
  }
  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.normals.assign(cloud.size(), Vec3::UnitZ());
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const auto nb = tree.knn(cloud.points[p], static_cast<std::size_t>(k));
    Vec3 mean = Vec3::Zero();
    for (auto i : nb) mean += cloud.points[i];
    mean /= static_cast<double>(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (auto i : nb) {
      const Vec3 d = cloud.points[i] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nb.size());
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const Vec3 ev = es.eigenvalues();  // ascending
    const bool degenerate = !(ev[2] > 0.0) || (ev[1] - ev[0]) <= 1e-12 * ev[2];
    if (degenerate) {
      out.valid[p] = 0;
      continue;
    }
    out.normals[p] = es.eigenvectors().col(0).normalized();
  }
  return out;
}

PointCloud orient_normals(const PointCloud& cloud, const Vec3& reference_axis) {
  if (!cloud.has_normals()) throw_validation("orient_normals: cloud has no normals");
  const Vec3 axis = reference_axis.normalized();
  const std::size_t n = cloud.size();
  constexpr double kHalfSlab = 3.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = cloud.points[i].dot(axis);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return h[a] < h[b]; });
  std::vector<double> sorted_h(n);
  std::vector<Vec3> prefix(n + 1, Vec3::Zero());
  for (std::size_t r = 0; r < n; ++r) {
    sorted_h[r] = h[order[r]];
    prefix[r + 1] = prefix[r] + cloud.points[order[r]];
  }
  const Vec3 global = prefix[n] / static_cast<double>(n);

  PointCloud out = cloud;
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = std::lower_bound(sorted_h.begin(), sorted_h.end(), h[i] - kHalfSlab) - sorted_h.begin();
    const auto hi = std::upper_bound(sorted_h.begin(), sorted_h.end(), h[i] + kHalfSlab) - sorted_h.begin();
    const auto count = hi - lo;
    const Vec3 centre = count >= 4 ? Vec3((prefix[hi] - prefix[lo]) / static_cast<double>(count)) : global;
    Vec3 radial = cloud.points[i] - centre;
    radial -= radial.dot(axis) * axis;
    if (out.normals[i].dot(radial) < 0.0) out.normals[i] = -out.normals[i];
  }
  return out;
}

}  // namespace wallkin
