#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "wallkin/cylinder.hpp"
#include "wallkin/error.hpp"

using namespace wallkin;
using wallkin::test::Gen;

namespace {

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::min(1.0, std::abs(a.normalized().dot(b.normalized())))) * 180.0 / std::numbers::pi;
}

// Cylinder patch around an arbitrary axis, with exact normals.
void patch(double radius, const Vec3& axis, int n, Gen& gen, std::vector<Vec3>& pts,
           std::vector<Vec3>& nrm, const Vec3& centre = Vec3(10, -5, 3)) {
  const Vec3 a = axis.normalized();
  const Vec3 u = a.unitOrthogonal();
  const Vec3 v = a.cross(u);
  for (int i = 0; i < n; ++i) {
    const double th = gen.uniform(-0.6, 0.6), z = gen.uniform(-4, 4);
    const Vec3 radial = std::cos(th) * u + std::sin(th) * v;
    pts.push_back(centre + radius * radial + z * a);
    nrm.push_back(radial);
  }
}

}  // namespace

TEST_CASE("parameter validation") {
  CurvatureParams p;
  CHECK_NOTHROW(p.validate());
  auto q = p;
  q.k_neighbors = 5;
  CHECK_THROWS_AS(q.validate(), ValidationError);
  q = p;
  q.axis_cone_deg = 0;
  CHECK_THROWS_AS(q.validate(), ValidationError);
  q = p;
  q.axis_cone_deg = 91;
  CHECK_THROWS_AS(q.validate(), ValidationError);
  q = p;
  q.r_min_mm = 200;
  CHECK_THROWS_AS(q.validate(), ValidationError);
  q = p;
  q.min_inlier_fraction = 1.5;
  CHECK_THROWS_AS(q.validate(), ValidationError);
}

TEST_CASE("noiseless cylinder radius") {
  Gen gen(1);
  std::vector<Vec3> pts, nrm;
  patch(25.0, Vec3::UnitZ(), 200, gen, pts, nrm);
  CurvatureParams p;
  const auto fit = fit_cylinder_msac(pts, nrm, p);
  REQUIRE(fit.ok);
  CHECK(std::abs(fit.radius - 25.0) <= 0.025);
  CHECK(fit.inlier_count == 200);
  CHECK(std::abs(fit.axis_dir.norm() - 1.0) < 1e-12);
  for (const auto& q : pts) CHECK(cylinder_residual(fit, q) < 1e-6);

  SUBCASE("without normals the five-point path still fits") {
    const auto f5 = fit_cylinder_msac(pts, {}, p);
    REQUIRE(f5.ok);
    CHECK(std::abs(f5.radius - 25.0) <= 0.025);
  }
}

TEST_CASE("cylinder radius with outliers") {
  Gen gen(2);
  std::vector<Vec3> pts, nrm;
  patch(25.0, Vec3::UnitZ(), 140, gen, pts, nrm);
  const Vec3 centre(10, -5, 3);
  for (int i = 0; i < 60; ++i) {
    const double th = gen.uniform(-0.6, 0.6), r = gen.uniform(20.0, 30.0);
    const Vec3 radial(std::cos(th), std::sin(th), 0.0);
    pts.push_back(centre + Vec3(r * radial.x(), r * radial.y(), gen.uniform(-4, 4)));
    nrm.push_back(gen.unit());
  }
  for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
    CurvatureParams p;
    p.rng_seed = seed;
    const auto fit = fit_cylinder_msac(pts, nrm, p);
    REQUIRE(fit.ok);
    CHECK(std::abs(fit.radius - 25.0) <= 0.25);
    CHECK(fit.inlier_count <= static_cast<int>(pts.size()));
  }
}

TEST_CASE("a plane is not a bounded cylinder") {
  Gen gen(3);
  std::vector<Vec3> pts, nrm;
  for (int i = 0; i < 200; ++i) {
    pts.push_back(Vec3(20.0, gen.uniform(-5, 5), gen.uniform(-5, 5)));
    nrm.push_back(Vec3::UnitX());
  }
  CHECK_FALSE(fit_cylinder_msac(pts, nrm, CurvatureParams{}).ok);
  CHECK_FALSE(fit_cylinder_msac(pts, {}, CurvatureParams{}).ok);
}

TEST_CASE("axis stays inside the cone") {
  Gen gen(4);
  for (int trial = 0; trial < 12; ++trial) {
    const double tilt = gen.uniform(0, 60) * std::numbers::pi / 180.0;
    const Vec3 axis(std::sin(tilt), 0.0, std::cos(tilt));
    std::vector<Vec3> pts, nrm;
    patch(gen.uniform(10, 40), axis, 120, gen, pts, nrm);
    for (auto& q : pts) q += 0.05 * gen.gaussian_vec();
    CurvatureParams p;
    p.rng_seed = static_cast<std::uint64_t>(trial);
    const auto fit = fit_cylinder_msac(pts, trial % 2 ? std::vector<Vec3>{} : nrm, p);
    CAPTURE(tilt);
    CHECK(angle_deg(fit.axis_dir, p.reference_axis) <= p.axis_cone_deg + 1e-9);
    if (fit.ok) {
      CHECK(fit.radius >= p.r_min_mm);
      CHECK(fit.radius <= p.r_max_mm);
    }
  }
}

TEST_CASE("fits are deterministic for a seed") {
  Gen gen(5);
  std::vector<Vec3> pts, nrm;
  patch(18.0, Vec3(0.1, 0.2, 1.0), 150, gen, pts, nrm);
  for (auto& q : pts) q += 0.2 * gen.gaussian_vec();
  CurvatureParams p;
  p.rng_seed = 42;
  const auto a = fit_cylinder_msac(pts, nrm, p);
  const auto b = fit_cylinder_msac(pts, nrm, p);
  CHECK(a.radius == b.radius);
  CHECK(a.axis_dir == b.axis_dir);
  CHECK(a.msac_score == b.msac_score);
  CHECK(fit_cylinder_msac(pts, nrm, p, 42).radius == a.radius);
  CHECK(split_seed(7, 1) != split_seed(7, 2));
  CHECK_THROWS_AS(fit_cylinder_msac(std::span<const Vec3>(pts.data(), 5), {}, p), ValidationError);
}

TEST_CASE("radius of curvature field") {
  CurvatureParams p;
  SUBCASE("cylinder") {
    const auto c = test::cylinder_cloud(25.0, 160, 40, 0.5);
    const auto out = radius_of_curvature_field(c, p);
    REQUIRE(out.has_radius());
    for (std::size_t i = 0; i < out.size(); ++i) {
      REQUIRE(out.valid[i]);
      CHECK(std::abs(out.radius[i] - 25.0) <= 0.25);
    }
  }
  SUBCASE("sphere equator") {
    // The neighbourhood must reach past the inlier band so the fit follows the
    // equatorial section rather than a least-squares compromise over the cap.
    const auto c = test::sphere_cloud(30.0, 12000);
    p.k_neighbors = 800;
    const auto out = radius_of_curvature_field(c, p);
    int checked = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (std::abs(c.points[i].z()) > 3.0 || !out.valid[i]) continue;
      CHECK(std::abs(out.radius[i] - 30.0) <= 1.5);
      ++checked;
    }
    CHECK(checked > 500);
  }
  SUBCASE("too few points") {
    const auto c = test::cylinder_cloud(25.0, 10, 5, 1.0);
    CHECK_THROWS_AS(radius_of_curvature_field(c, p), ValidationError);
  }
  SUBCASE("mostly failing fits are an error") {
    Gen gen(8);
    PointCloud c;
    for (int i = 0; i < 400; ++i) {
      c.add_point(Vec3(50.0, gen.uniform(-10, 10), gen.uniform(-10, 10)));
      c.normals.push_back(Vec3::UnitX());
    }
    CHECK_THROWS_AS(radius_of_curvature_field(c, p), NumericError);
  }
}
