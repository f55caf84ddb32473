#include "wallkin/kdtree.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

#include "wallkin/error.hpp"

namespace wallkin {
namespace {

constexpr std::size_t kLeafSize = 8;

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

}  // namespace

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::size_t> KdTree::knn(const Vec3& query, std::size_t k) const {
  if (k > points_.size()) {
    throw_validation("knn: k = " + std::to_string(k) + " exceeds point count " +
                     std::to_string(points_.size()));
  }
  if (k == 0) return {};
  std::priority_queue<Candidate> heap;  // max-heap on (d2, index)

  auto visit_leaf = [&](const Node& n) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const Candidate c{(points_[idx] - query).squaredNorm(), idx};
      if (heap.size() < k) {
        heap.push(c);
      } else if (c < heap.top()) {
        heap.pop();
        heap.push(c);
      }
    }
  };

  // Iterative depth-first search, nearer child first.
  std::vector<std::pair<int, double>> stack{{0, 0.0}};
  while (!stack.empty()) {
    const auto [id, bound] = stack.back();
    stack.pop_back();
    if (heap.size() == k && bound > heap.top().first) continue;
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      visit_leaf(n);
      continue;
    }
    const double delta = query[n.axis] - n.split;
    const int near = delta < 0.0 ? n.left : n.right;
    const int far = delta < 0.0 ? n.right : n.left;
    stack.emplace_back(far, std::max(bound, delta * delta));
    stack.emplace_back(near, bound);
  }

  std::vector<Candidate> found;
  found.reserve(k);
  while (!heap.empty()) {
    found.push_back(heap.top());
    heap.pop();
  }
  std::sort(found.begin(), found.end());
  std::vector<std::size_t> out(found.size());
  for (std::size_t i = 0; i < found.size(); ++i) out[i] = found[i].second;
  return out;
}

std::vector<std::size_t> knn(const PointCloud& cloud, const Vec3& query, std::size_t k) {
  return KdTree(cloud.points).knn(query, k);
}

}  // namespace wallkin
