#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wallkin/point_cloud.hpp"

namespace wallkin {

/// Static 3-D k-d tree for exact k-nearest-neighbour queries.
///
/// Results are sorted by ascending distance; equal distances are ordered by
/// ascending point index. The tree is immutable after construction, so
/// concurrent queries are safe.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  std::vector<std::size_t> knn(const Vec3& query, std::size_t k) const;

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_ (leaves)
    int axis = -1;                   // -1 for leaves
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Convenience wrapper that builds a tree over `cloud.points`.
std::vector<std::size_t> knn(const PointCloud& cloud, const Vec3& query, std::size_t k);

}  // namespace wallkin
