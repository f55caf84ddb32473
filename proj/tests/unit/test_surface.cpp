#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "wallkin/error.hpp"
#include "wallkin/kdtree.hpp"
#include "wallkin/surface.hpp"

using namespace wallkin;
using wallkin::test::Gen;

namespace {

Volume3 box_mask(Index3 dims, Index3 lo, Index3 hi) {
  Geometry g;
  g.dims = dims;
  g.spacing = Vec3(0.5, 0.7, 1.2);
  g.origin = Vec3(3, -1, 2);
  Volume3 m(g);
  for (int k = lo[2]; k < hi[2]; ++k)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int i = lo[0]; i < hi[0]; ++i) m(i, j, k) = 1.0f;
  return m;
}

PointCloud scramble_signs(PointCloud c, Gen& gen) {
  for (auto& n : c.normals)
    if (gen.uniform(0, 1) < 0.5) n = -n;
  return c;
}

}  // namespace

TEST_CASE("wall extraction") {
  SUBCASE("a single voxel is its own surface") {
    Volume3 m = box_mask({5, 5, 5}, {2, 2, 2}, {3, 3, 3});
    const auto c = extract_wall_points(m, 0.5);
    REQUIRE(c.size() == 1u);
    CHECK((c.points[0] - m.geometry().center(2, 2, 2)).norm() < 1e-12);
    CHECK(c.valid_count() == 1u);
  }
  SUBCASE("a filled box yields exactly its shell") {
    Gen gen(3);
    for (int t = 0; t < 10; ++t) {
      const Index3 lo{gen.integer(1, 3), gen.integer(1, 3), gen.integer(1, 3)};
      const Index3 size{gen.integer(3, 7), gen.integer(3, 7), gen.integer(3, 7)};
      const Index3 hi{lo[0] + size[0], lo[1] + size[1], lo[2] + size[2]};
      const Volume3 m = box_mask({12, 12, 12}, lo, hi);
      const auto c = extract_wall_points(m, 0.5);
      const std::size_t expected = static_cast<std::size_t>(size[0]) * size[1] * size[2] -
                                   static_cast<std::size_t>(size[0] - 2) * (size[1] - 2) * (size[2] - 2);
      CHECK(c.size() == expected);
    }
  }
  SUBCASE("faces on the volume border are not surface") {
    const Volume3 m = box_mask({6, 6, 6}, {0, 0, 0}, {6, 6, 3});
    CHECK(extract_wall_points(m, 0.5).size() == 36u);
  }
  SUBCASE("empty and full masks have no surface") {
    CHECK_THROWS_AS(extract_wall_points(box_mask({4, 4, 4}, {0, 0, 0}, {0, 0, 0}), 0.5), ValidationError);
    CHECK_THROWS_AS(extract_wall_points(box_mask({4, 4, 4}, {0, 0, 0}, {4, 4, 4}), 0.5), ValidationError);
  }
  SUBCASE("outer wall of a tube drops the lumen side") {
    Geometry g;
    g.dims = {40, 40, 6};
    Volume3 m(g);
    for (int k = 0; k < 6; ++k)
      for (int j = 0; j < 40; ++j)
        for (int i = 0; i < 40; ++i) {
          const double r = std::hypot(i - 19.5, j - 19.5);
          m(i, j, k) = (r >= 10 && r <= 15) ? 1.0f : 0.0f;
        }
    const auto all = extract_wall_points(m, 0.5);
    const auto outer = extract_outer_wall_points(m, 0.5, 2);
    CHECK(outer.size() < all.size());
    for (const auto& p : outer.points) CHECK(std::hypot(p.x() - 19.5, p.y() - 19.5) > 13.0);
    CHECK_THROWS_AS(extract_outer_wall_points(m, 0.5, 3), ValidationError);
  }
}

TEST_CASE("k-nearest neighbours") {
  PointCloud line;
  for (double x : {0.0, 1.0, 5.0}) line.add_point(Vec3(x, 0, 0));
  CHECK(knn(line, Vec3(0.4, 0, 0), 2) == std::vector<std::size_t>{0, 1});
  CHECK(knn(line, Vec3(5, 0, 0), 1) == std::vector<std::size_t>{2});
  CHECK(knn(line, Vec3(0.5, 0, 0), 2) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(knn(line, Vec3::Zero(), 4), ValidationError);

  Gen gen(99);
  std::vector<Vec3> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back(gen.vec(-10, 10));
  // Exact duplicates and a lattice exercise the tie-break rule.
  for (int i = 0; i < 50; ++i) pts.push_back(pts[i]);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) pts.push_back(Vec3(i, j, 0.0));
  const KdTree tree(pts);
  for (int q = 0; q < 100; ++q) {
    const Vec3 query = q % 10 == 0 ? Vec3(gen.integer(0, 4) + 0.5, gen.integer(0, 4), 0.0) : gen.vec(-12, 12);
    REQUIRE(tree.knn(query, 20) == test::brute_knn(pts, query, 20));
  }
}

TEST_CASE("PCA normals") {
  SUBCASE("plane") {
    Gen gen(4);
    PointCloud c;
    for (int i = 0; i < 300; ++i) c.add_point(Vec3(gen.uniform(-5, 5), gen.uniform(-5, 5), 0.0));
    const auto out = estimate_normals(c, 12);
    for (std::size_t i = 0; i < out.size(); ++i) {
      REQUIRE(out.valid[i]);
      CHECK(std::abs(std::abs(out.normals[i].z()) - 1.0) < 1e-9);
    }
  }
  SUBCASE("cylinder") {
    const auto c = test::cylinder_cloud(25.0, 400, 30, 0.4);
    PointCloud bare;
    bare.points = c.points;
    bare.valid = c.valid;
    const auto out = estimate_normals(bare, 20);
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double cosang = std::min(1.0, std::abs(out.normals[i].dot(c.normals[i])));
      worst = std::max(worst, std::acos(cosang) * 180.0 / std::numbers::pi);
    }
    CHECK(worst < 2.0);
  }
  SUBCASE("collinear neighbourhoods are invalid") {
    PointCloud c;
    for (int i = 0; i < 10; ++i) c.add_point(Vec3(i, 2.0 * i, -i));
    const auto out = estimate_normals(c, 5);
    for (auto v : out.valid) CHECK_FALSE(v);
  }
  SUBCASE("preconditions") {
    PointCloud c;
    for (int i = 0; i < 4; ++i) c.add_point(Vec3(i, i * i, 0));
    CHECK_THROWS_AS(estimate_normals(c, 5), ValidationError);
    CHECK_THROWS_AS(estimate_normals(c, 2), ValidationError);
  }
}

TEST_CASE("normals are rotation equivariant") {
  Gen gen(12);
  for (int trial = 0; trial < 5; ++trial) {
    PointCloud c;
    for (int i = 0; i < 400; ++i) {
      const double th = gen.uniform(0, 1.5), z = gen.uniform(0, 10);
      c.add_point(Vec3(20 * std::cos(th), 20 * std::sin(th), z) + 0.05 * gen.gaussian_vec());
    }
    const Eigen::Matrix3d R = gen.rotation();
    const Vec3 t = gen.vec(-50, 50);
    PointCloud rc = c;
    for (auto& p : rc.points) p = R * p + t;
    const auto a = estimate_normals(c, 15);
    const auto b = estimate_normals(rc, 15);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const Vec3 rn = R * a.normals[i];
      worst = std::max(worst, std::min((rn - b.normals[i]).norm(), (rn + b.normals[i]).norm()));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("normal orientation") {
  Gen gen(7);
  SUBCASE("cylinder normals point away from the axis") {
    const auto truth = test::cylinder_cloud(25.0, 90, 20, 0.7, Vec3(4, -3, 0));
    const auto out = orient_normals(scramble_signs(truth, gen), Vec3::UnitZ());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.normals[i].dot(truth.normals[i]) > 0);
    const auto again = orient_normals(out, Vec3::UnitZ());
    CHECK(again.normals == out.normals);
  }
  SUBCASE("sphere normals point away from the centre") {
    const auto truth = test::sphere_cloud(30.0, 4000);
    const auto out = orient_normals(scramble_signs(truth, gen), Vec3::UnitZ());
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::abs(truth.points[i].z()) > 27.0) continue;
      CHECK(out.normals[i].dot(truth.normals[i]) > 0);
    }
  }
  SUBCASE("missing normals") {
    PointCloud c;
    c.add_point(Vec3::Zero());
    CHECK_THROWS_AS(orient_normals(c, Vec3::UnitZ()), ValidationError);
  }
}
