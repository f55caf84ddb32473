#include <doctest.h>

#include <numeric>

#include "test_support.hpp"
#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"
#include "wallkin/parallel.hpp"
#include "wallkin/volume.hpp"

using namespace wallkin;
using wallkin::test::Gen;

namespace {

Geometry geom(Index3 dims, Vec3 spacing = Vec3(1, 1, 1), Vec3 origin = Vec3::Zero()) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = origin;
  return g;
}

// a + b.x in physical coordinates.
Volume3 linear_ramp(const Geometry& g, double a, const Vec3& b) {
  Volume3 v(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) v(i, j, k) = static_cast<float>(a + b.dot(g.center(i, j, k)));
  return v;
}

}  // namespace

TEST_CASE("geometry indexing and validation") {
  const auto g = geom({4, 5, 6}, Vec3(0.5, 1.0, 2.0), Vec3(1, 2, 3));
  CHECK(g.voxel_count() == 120);
  CHECK(g.voxel_volume() == doctest::Approx(1.0));
  CHECK(g.linear(1, 2, 3) == 1 + 4 * (2 + 5 * 3));
  CHECK((g.center(2, 0, 1) - Vec3(2, 2, 5)).norm() < 1e-12);
  CHECK((g.to_index(g.center(3, 4, 5)) - Vec3(3, 4, 5)).norm() < 1e-12);

  CHECK_THROWS_AS(geom({1, 4, 4}).validate(), ValidationError);
  CHECK_THROWS_AS(geom({4, 4, 4}, Vec3(1, 0, 1)).validate(), ValidationError);
  CHECK_THROWS_AS(Volume3(g, std::vector<float>(7)), ValidationError);
  CHECK(g.matches(geom({4, 5, 6}, Vec3(0.5, 1.0, 2.0), Vec3(1, 2, 3 + 1e-9))));
  CHECK_FALSE(g.matches(geom({4, 5, 7}, Vec3(0.5, 1.0, 2.0), Vec3(1, 2, 3))));
}

TEST_CASE("trilinear sampling") {
  const auto g = geom({6, 5, 4}, Vec3(0.7, 1.1, 1.3), Vec3(-1, 2, 0.5));
  const Vec3 b(0.3, -1.2, 2.0);
  const Volume3 v = linear_ramp(g, 4.0, b);

  SUBCASE("voxel centres return stored values") {
    CHECK(sample_trilinear(v, g.center(3, 2, 1)) == v(3, 2, 1));
  }
  SUBCASE("exact on a linear function inside the volume") {
    Gen gen(1);
    for (int t = 0; t < 200; ++t) {
      const Vec3 idx(gen.uniform(0, 5), gen.uniform(0, 4), gen.uniform(0, 3));
      const Vec3 p = g.origin + idx.cwiseProduct(g.spacing);
      CHECK(sample_trilinear(v, p) == doctest::Approx(4.0 + b.dot(p)).epsilon(1e-5));
    }
  }
  SUBCASE("clamped outside") {
    const Vec3 far_out = g.center(5, 4, 3) + Vec3(10, 10, 10);
    CHECK(sample_trilinear(v, far_out) == doctest::Approx(v(5, 4, 3)));
    CHECK(sample_trilinear(v, g.origin - Vec3(3, 3, 3)) == doctest::Approx(v(0, 0, 0)));
  }
  SUBCASE("gradient is exact for a linear function and zero on clamped axes") {
    const auto data = v.to_double();
    Vec3 grad;
    sample_trilinear_with_gradient(std::span<const double>(data), g.dims, Vec3(2.3, 1.7, 0.4), grad);
    const Vec3 per_index = b.cwiseProduct(g.spacing);
    CHECK((grad - per_index).norm() < 1e-5);
    sample_trilinear_with_gradient(std::span<const double>(data), g.dims, Vec3(-2.0, 1.7, 0.4), grad);
    CHECK(grad.x() == 0.0);
    CHECK(grad.y() == doctest::Approx(per_index.y()));
  }
}

TEST_CASE("gaussian kernel and smoothing") {
  const auto k = gaussian_kernel(1.5);
  CHECK(k.size() == 2 * 5 + 1);
  CHECK(std::accumulate(k.begin(), k.end(), 0.0) == doctest::Approx(1.0));
  CHECK(gaussian_kernel(0.0).size() == 1);

  const auto g = geom({9, 7, 5});
  SUBCASE("constant images stay constant, borders included") {
    const Volume3 c(g, 3.5f);
    const Volume3 s = gaussian_smooth(c, Vec3(1.2, 2.0, 0.7));
    for (float x : s.data()) CHECK(x == doctest::Approx(3.5f));
  }
  SUBCASE("transpose is the adjoint: <Gx, y> = <x, G^T y>") {
    Gen gen(7);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> x(g.voxel_count()), y(g.voxel_count()), gx(x.size()), gty(x.size());
      for (auto& e : x) e = gen.normal();
      for (auto& e : y) e = gen.normal();
      const std::array<double, 3> sigma{gen.uniform(0.3, 2.0), gen.uniform(0.3, 2.0), gen.uniform(0.0, 1.0)};
      smooth_gaussian(x, gx, g.dims, sigma);
      smooth_gaussian_transpose(y, gty, g.dims, sigma);
      const double lhs = std::inner_product(gx.begin(), gx.end(), y.begin(), 0.0);
      const double rhs = std::inner_product(x.begin(), x.end(), gty.begin(), 0.0);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
  }
  SUBCASE("result does not depend on the thread count") {
    Gen gen(3);
    const Volume3 v = test::random_volume(geom({20, 18, 9}), gen, 0.0);
    const int before = thread_count();
    set_thread_count(1);
    const Volume3 a = gaussian_smooth(v, Vec3(1.5, 1.5, 1.5));
    set_thread_count(4);
    const Volume3 b = gaussian_smooth(v, Vec3(1.5, 1.5, 1.5));
    set_thread_count(before);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
}

TEST_CASE("central gradient of a ramp is exact, borders included") {
  const auto g = geom({6, 6, 5}, Vec3(0.5, 0.8, 1.5));
  const Vec3 b(1.0, -2.0, 0.25);
  const auto grad = gradient_central(linear_ramp(g, 0.0, b));
  for (std::size_t i = 0; i < g.voxel_count(); ++i) CHECK((grad.at(i) - b).norm() < 1e-4);
}

TEST_CASE("crop and downsample") {
  const auto g = geom({10, 8, 6}, Vec3(0.5, 1, 2), Vec3(1, 1, 1));
  Gen gen(2);
  const Volume3 v = test::random_volume(g, gen, 0.0);

  const Volume3 c = crop(v, {2, 1, 3}, {7, 8, 5});
  CHECK(c.dims() == Index3{5, 7, 2});
  CHECK((c.origin() - g.center(2, 1, 3)).norm() < 1e-12);
  CHECK(c(0, 0, 0) == v(2, 1, 3));
  CHECK(c(4, 6, 1) == v(6, 7, 4));
  CHECK_THROWS_AS(crop(v, {0, 0, 0}, {11, 8, 6}), ValidationError);
  CHECK_THROWS_AS(crop(v, {3, 0, 0}, {3, 8, 6}), ValidationError);

  const Volume3 d = downsample2(v);
  CHECK(d.dims() == Index3{5, 4, 3});
  CHECK((d.spacing() - 2 * g.spacing).norm() < 1e-12);
  CHECK((d.origin() - g.origin).norm() < 1e-12);
  CHECK_THROWS_AS(downsample2(Volume3(geom({3, 8, 8}))), ValidationError);
}

TEST_CASE("parallel_chunks covers the range once and rethrows worker errors") {
  const int before = thread_count();
  set_thread_count(3);
  std::vector<int> hit(1000, 0);
  parallel_chunks(hit.size(), 7, [&](std::size_t b, std::size_t e, std::size_t) {
    for (auto i = b; i < e; ++i) ++hit[i];
  });
  CHECK(std::all_of(hit.begin(), hit.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_chunks(10, 5,
                                  [](std::size_t b, std::size_t, std::size_t) {
                                    if (b >= 4) throw_numeric("boom");
                                  }),
                  NumericError);
  set_thread_count(before);
}
