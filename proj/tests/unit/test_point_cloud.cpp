#include <doctest.h>

#include <fstream>

#include "test_support.hpp"
#include "wallkin/error.hpp"
#include "wallkin/point_cloud.hpp"

using namespace wallkin;
using wallkin::test::Gen;
using wallkin::test::TempDir;

namespace {

PointCloud full_cloud(Gen& gen, std::size_t n) {
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.add_point(gen.vec(-30, 30));
    c.normals.push_back(gen.unit());
    c.radius.push_back(gen.uniform(5, 100));
    c.valid[i] = i % 7 != 3;
  }
  c.set_attribute("strain", gen.values(n, -0.1, 0.1));
  c.set_attribute("u_normal", gen.values(n, -1, 1));
  return c;
}

void check_same(const PointCloud& a, const PointCloud& b) {
  CHECK(a.points == b.points);
  CHECK(a.normals == b.normals);
  CHECK(a.radius == b.radius);
  CHECK(a.valid == b.valid);
  CHECK(a.attributes == b.attributes);
}

}  // namespace

TEST_CASE("PLY and CSV reloads are exact") {
  TempDir dir("pc");
  Gen gen(3);
  const auto c = full_cloud(gen, 57);
  save_point_cloud(c, dir / "c.ply");
  save_point_cloud(c, dir / "c.csv");
  check_same(load_point_cloud(dir / "c.ply"), c);
  check_same(load_point_cloud(dir / "c.csv"), c);

  PointCloud bare;
  bare.add_point(Vec3(1, 2, 3));
  save_ply(bare, dir / "b.ply");
  const auto r = load_ply(dir / "b.ply");
  CHECK_FALSE(r.has_normals());
  CHECK_FALSE(r.has_radius());
  check_same(r, bare);
}

TEST_CASE("attributes and validation") {
  PointCloud c;
  c.add_point(Vec3::Zero());
  c.add_point(Vec3::UnitX());
  c.set_attribute("a", {1, 2});
  c.set_attribute("a", {3, 4});
  REQUIRE(c.find_attribute("a"));
  CHECK(*c.find_attribute("a") == std::vector<double>{3, 4});
  CHECK(c.find_attribute("b") == nullptr);
  CHECK_NOTHROW(c.validate());
  c.normals = {Vec3::UnitZ(), Vec3(0, 0, 2)};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.normals.clear();
  c.radius = {1.0};
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("malformed files") {
  TempDir dir("pc_bad");
  CHECK_THROWS_AS(load_point_cloud(dir / "missing.ply"), IoError);
  {
    std::ofstream(dir / "x.ply") << "not a ply\n";
  }
  CHECK_THROWS_AS(load_ply(dir / "x.ply"), IoError);
  {
    std::ofstream(dir / "t.ply") << "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\n"
                                    "property double y\nproperty double z\nend_header\n0 0 0\n1 1 1\n";
  }
  CHECK_THROWS_AS(load_ply(dir / "t.ply"), IoError);
  {
    std::ofstream(dir / "c.csv") << "x,y,z\n1,2\n";
  }
  CHECK_THROWS_AS(load_csv(dir / "c.csv"), IoError);
}
