#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "wallkin/error.hpp"
#include "wallkin/kinematics.hpp"
#include "wallkin/synthetic.hpp"

using namespace wallkin;
using wallkin::test::Gen;

namespace {

// Sort-based percentile with linear interpolation between ranks.
double percentile_oracle(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = (static_cast<double>(v.size()) - 1.0) * p / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = static_cast<std::size_t>(std::ceil(rank));
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Green strain from the incompressible deformation gradient diag(1/(1+e), 1+e, 1).
Vec3 green_oracle(double e) {
  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  F(0, 0) = 1.0 / (1.0 + e);
  F(1, 1) = 1.0 + e;
  const Eigen::Matrix3d E = 0.5 * (F.transpose() * F - Eigen::Matrix3d::Identity());
  return E.diagonal();
}

PointCloud ring_cloud(double radius, int n_theta, int n_z, double dz, const Vec3& c) {
  PointCloud cloud = test::cylinder_cloud(radius, n_theta, n_z, dz, c);
  cloud.radius.assign(cloud.size(), radius);
  return cloud;
}

}  // namespace

TEST_CASE("normal and tangential decomposition") {
  auto d = decompose_displacement(Vec3(0, 0, 1), Vec3(0, 0, 1));
  CHECK(d.u_normal == 1.0);
  CHECK(d.tangential.norm() == 0.0);
  d = decompose_displacement(Vec3(3, 4, 0), Vec3(1, 0, 0));
  CHECK(d.u_normal == 3.0);
  CHECK(d.tangential == Vec3(0, 4, 0));
  CHECK_THROWS_AS(decompose_displacement(Vec3(1, 0, 0), Vec3(1, 1, 0)), ValidationError);

  Gen gen(1);
  for (int t = 0; t < 1000; ++t) {
    const Vec3 v = gen.gaussian_vec(2.0), n = gen.unit();
    const auto r = decompose_displacement(v, n);
    REQUIRE((r.u_normal * n + r.tangential - v).norm() <= 1e-12);
    REQUIRE(std::abs(r.tangential.dot(n)) <= 1e-12);
    REQUIRE(std::abs(v.squaredNorm() - r.u_normal * r.u_normal - r.tangential.squaredNorm()) <= 1e-9);
  }
}

TEST_CASE("circumferential strain") {
  CHECK(strain_at_point(1.0, 25.0) == doctest::Approx(0.04));
  CHECK(strain_at_point(0.0, 25.0) == 0.0);
  CHECK(strain_at_point(-0.5, 25.0) == doctest::Approx(-0.02));
  CHECK_THROWS_AS(strain_at_point(1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(strain_at_point(1.0, -3.0), ValidationError);
}

TEST_CASE("Green tensor") {
  CHECK(green_tensor(0.0) == Vec3::Zero());
  const Vec3 e = green_tensor(0.0554);
  CHECK(e.x() == doctest::Approx(-0.05109).epsilon(1e-4));
  CHECK(e.y() == doctest::Approx(0.05694).epsilon(1e-4));
  CHECK(e.z() == 0.0);
  CHECK_THROWS_AS(green_tensor(-1.0), ValidationError);

  Gen gen(2);
  double prev_tt = green_tensor(-0.9).y();
  for (int t = 0; t < 500; ++t) {
    const double eps = gen.uniform(-0.9, 2.0);
    REQUIRE((green_tensor(eps) - green_oracle(eps)).norm() <= 1e-12);
    const double det = (1.0 / (1.0 + eps)) * (1.0 + eps);
    REQUIRE(std::abs(det - 1.0) <= 1e-15);
  }
  for (double eps = -0.85; eps < 2.0; eps += 0.05) {
    const double tt = green_tensor(eps).y();
    CHECK(tt > prev_tt);
    prev_tt = tt;
  }
}

TEST_CASE("percentiles") {
  const std::vector<double> five{1, 2, 3, 4, 5};
  CHECK(percentile(five, 50) == 3.0);
  CHECK(percentile(std::vector<double>(7, 2.5), 13) == 2.5);
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), ValidationError);
  CHECK_THROWS_AS(percentile(std::vector<double>{1.0, std::nan("")}, 50), ValidationError);

  Gen gen(3);
  const auto v = gen.values(1000, -3, 7);
  CHECK(percentile(v, 99) == percentile_oracle(v, 99));
  for (int t = 0; t < 200; ++t) {
    const auto w = gen.values(static_cast<std::size_t>(gen.integer(1, 300)), -10, 10);
    const double delta = gen.uniform(0, 49.9);
    const double hi = percentile(w, 100 - delta);
    REQUIRE(hi <= *std::max_element(w.begin(), w.end()));
    REQUIRE(hi >= percentile(w, 50));
    REQUIRE(percentile(w, gen.uniform(0.1, 99.9)) >= *std::min_element(w.begin(), w.end()));
  }
}

TEST_CASE("summary statistics of the per-patient peak values") {
  const std::vector<double> U{1.34, 1.31, 1.00, 1.19, 1.14, 1.02, 1.42, 1.03, 0.70, 1.27};
  const std::vector<double> u{0.99, 1.13, 0.82, 0.91, 0.93, 0.94, 1.05, 0.77, 0.53, 0.93};
  const std::vector<double> e{5.54, 5.23, 4.46, 4.01, 3.91, 4.38, 5.50, 4.55, 2.62, 4.32};
  const auto sU = summary_stats(U), su = summary_stats(u), se = summary_stats(e);
  CHECK(std::abs(sU.mean - 1.14) <= 0.005);
  CHECK(std::abs(sU.sample_std - 0.21) <= 0.005);
  CHECK(std::abs(su.mean - 0.90) <= 0.005);
  CHECK(std::abs(su.sample_std - 0.17) <= 0.005);
  CHECK(std::abs(se.mean - 4.45) <= 0.005);
  CHECK(std::abs(se.sample_std - 0.87) <= 0.005);
  CHECK(sU.min == 0.70);
  CHECK(sU.max == 1.42);
  CHECK(su.min == 0.53);
  CHECK(se.max == 5.54);

  const auto c = summary_stats(std::vector<double>{4.2, 4.2});
  CHECK(c.mean == 4.2);
  CHECK(c.sample_std == 0.0);
  CHECK_THROWS_AS(summary_stats(std::vector<double>{}), ValidationError);
}

TEST_CASE("zero field gives zero kinematics") {
  const auto cloud = ring_cloud(25.0, 60, 10, 1.0, Vec3::Zero());
  const auto kin = compute_wall_kinematics(cloud, [](const Vec3&) -> Vec3 { return Vec3::Zero(); });
  const auto s = summarize(kin);
  CHECK(s.U_o == 0.0);
  CHECK(s.u_o == 0.0);
  CHECK(s.eps_o == 0.0);
  CHECK(s.valid_count == cloud.size());
  for (const auto& g : kin.green) CHECK(g == Vec3::Zero());
}

TEST_CASE("analytic inflation on a cylinder") {
  AnalyticField f;
  f.axis_point = Vec3(30, 30, 0);
  f.length_mm = 60.0;
  const auto cloud = ring_cloud(25.0, 120, 61, 1.0, f.axis_point);
  const auto kin = compute_wall_kinematics(cloud, [&](const Vec3& p) -> Vec3 { return eval_field(f, p); });
  const auto s = summarize(kin);
  CHECK(s.strain.max == doctest::Approx(0.04).epsilon(0.02));
  for (std::size_t i = 0; i < kin.size(); ++i) {
    REQUIRE(kin.strain[i] == doctest::Approx(kin.u_normal[i] / kin.radius[i]).epsilon(1e-14));
    REQUIRE(kin.green[i].z() == 0.0);
    REQUIRE(kin.t_magnitude[i] <= 1e-12);
    if (kin.u_normal[i] != 0.0) REQUIRE((kin.strain[i] > 0) == (kin.u_normal[i] > 0));
  }
  CHECK(s.eps_o <= s.strain.max);
  CHECK(s.U_o == doctest::Approx(s.u_o));

  KinematicsOptions flipped;
  flipped.sign = -1.0;
  const auto neg = compute_wall_kinematics(cloud, [&](const Vec3& p) -> Vec3 { return eval_field(f, p); }, flipped);
  CHECK(neg.u_normal[cloud.size() / 2] == -kin.u_normal[cloud.size() / 2]);
  CHECK(summarize(neg).eps_o == s.eps_o);
  KinematicsOptions signed_opts;
  signed_opts.signed_percentiles = true;
  CHECK(summarize(neg, signed_opts).eps_o <= 0.0);
}

TEST_CASE("grid and dense sources agree and reject other frames") {
  Geometry g;
  g.dims = {40, 40, 20};
  g.spacing = Vec3(1.5, 1.5, 2.0);
  ControlGrid cg(g, {4, 4, 4});
  Gen gen(6);
  for (auto& d : cg.displacements()) d = gen.gaussian_vec(0.5);
  auto cloud = ring_cloud(20.0, 40, 10, 3.0, Vec3(30, 30, 4));
  const auto a = compute_wall_kinematics(cloud, cg);
  const auto b = compute_wall_kinematics(cloud, dense_field(cg, g));
  for (std::size_t i = 0; i < cloud.size(); ++i) REQUIRE((a.displacement[i] - b.displacement[i]).norm() < 1e-9);

  auto far = cloud;
  far.points[3] += Vec3(0, 0, 200);
  CHECK_THROWS_WITH_AS(compute_wall_kinematics(far, cg), doctest::Contains("frame mismatch"), ValidationError);
  CHECK_THROWS_AS(compute_wall_kinematics(far, dense_field(cg, g)), ValidationError);
}

TEST_CASE("invalid points are excluded and counted") {
  auto cloud = ring_cloud(25.0, 30, 4, 1.0, Vec3::Zero());
  cloud.valid[0] = 0;
  cloud.radius[1] = 0.0;
  const auto kin = compute_wall_kinematics(cloud, [](const Vec3& p) -> Vec3 { return 0.01 * p; });
  const auto s = summarize(kin);
  CHECK(s.valid_count == cloud.size() - 2);
  CHECK(s.invalid_count == 2u);
  std::fill(cloud.valid.begin(), cloud.valid.end(), 0);
  CHECK_THROWS_AS(summarize(compute_wall_kinematics(cloud, [](const Vec3&) -> Vec3 { return Vec3::Zero(); })),
                  ValidationError);
}

TEST_CASE("summary is invariant to point order") {
  Gen gen(9);
  auto cloud = ring_cloud(25.0, 50, 20, 1.0, Vec3::Zero());
  for (auto& r : cloud.radius) r = gen.uniform(20, 30);
  const auto field = [](const Vec3& p) -> Vec3 { return Vec3(std::sin(p.x()), 0.1 * p.y(), std::cos(p.z())); };
  const auto s1 = summarize(compute_wall_kinematics(cloud, field));

  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen.engine());
  PointCloud shuffled;
  for (auto i : perm) {
    shuffled.add_point(cloud.points[i]);
    shuffled.normals.push_back(cloud.normals[i]);
    shuffled.radius.push_back(cloud.radius[i]);
  }
  const auto s2 = summarize(compute_wall_kinematics(shuffled, field));
  CHECK(s1.U_o == s2.U_o);
  CHECK(s1.u_o == s2.u_o);
  CHECK(s1.eps_o == s2.eps_o);
  CHECK(s1.strain.mean == doctest::Approx(s2.strain.mean).epsilon(1e-12));
  CHECK(s1.strain.sample_std == doctest::Approx(s2.strain.sample_std).epsilon(1e-12));
  CHECK(s1.u_o >= s1.u_normal.min);
}

TEST_CASE("point cloud and JSON export") {
  Gen gen(10);
  const auto cloud = ring_cloud(25.0, 20, 5, 1.0, Vec3::Zero());
  const auto kin = compute_wall_kinematics(cloud, [&](const Vec3& p) -> Vec3 { return 0.02 * p + Vec3(0, 0, 0.1); });
  const auto back = from_point_cloud(to_point_cloud(kin));
  CHECK(back.displacement == kin.displacement);
  CHECK(back.strain == kin.strain);
  CHECK(back.green == kin.green);
  PointCloud bare;
  bare.add_point(Vec3::Zero());
  CHECK_THROWS_AS(from_point_cloud(bare), ValidationError);

  const auto s = summarize(kin);
  const auto j = nlohmann::json::parse(summary_to_json(s));
  CHECK(j.at("eps_o").get<double>() == s.eps_o);
  CHECK(j.at("U_o_mm").get<double>() == s.U_o);
  CHECK(j.at("valid_count").get<std::size_t>() == s.valid_count);
}
