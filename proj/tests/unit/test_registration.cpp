
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_support.hpp"
#include "wallkin/error.hpp"
#include "wallkin/registration.hpp"

using namespace wallkin;
using wallkin::test::Gen;
using wallkin::test::TempDir;

namespace {

// Small enough to rarely straddle a trilinear kink, large enough to stay clear of roundoff.
constexpr double kStep = 1e-6;

Geometry cube(int n, Vec3 spacing = Vec3(1.0, 1.0, 1.0)) {
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = spacing;
  return g;
}

Volume3 affine(const Volume3& v, double a, double b) {
  Volume3 out = v;
  for (float& x : out.data()) x = static_cast<float>(a * x + b);
  return out;
}

void randomize(ControlGrid& cg, Gen& gen, double max_abs) {
  for (auto& d : cg.displacements()) d = gen.vec(-max_abs, max_abs);
}

// Smoothed TV summed node by node, without reusing the library's difference code.
double tv_oracle(const ControlGrid& g, double eps) {
  const auto& gd = g.grid_dims();
  const Vec3 h = g.spacing_mm();
  double sum = 0.0;
  for (int c = 0; c < gd[2]; ++c)
    for (int b = 0; b < gd[1]; ++b)
      for (int a = 0; a < gd[0]; ++a) {
        const Vec3 k = g.at(a, b, c);
        const Vec3 dx = a + 1 < gd[0] ? Vec3((g.at(a + 1, b, c) - k) / h.x()) : Vec3::Zero();
        const Vec3 dy = b + 1 < gd[1] ? Vec3((g.at(a, b + 1, c) - k) / h.y()) : Vec3::Zero();
        const Vec3 dz = c + 1 < gd[2] ? Vec3((g.at(a, b, c + 1) - k) / h.z()) : Vec3::Zero();
        sum += std::sqrt(dx.squaredNorm() + dy.squaredNorm() + dz.squaredNorm() + eps * eps) - eps;
      }
  return g.cell_volume() * sum;
}

template <typename F>
void check_gradient(const ControlGrid& g0, const std::vector<Vec3>& grad, F&& energy, double h,
                    double tol) {
  double worst = 0.0;
  int checked = 0;
  for (std::size_t m = 0; m < g0.size(); ++m) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(grad[m][c]) <= 1e-8) continue;
      ControlGrid gp = g0, gm = g0;
      gp.displacements()[m][c] += h;
      gm.displacements()[m][c] -= h;
      const double fd = (energy(gp) - energy(gm)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[m][c]) / std::abs(grad[m][c]));
      ++checked;
    }
  }
  CHECK(checked > 0);
  CHECK(worst <= tol);
}

struct SmallPair {
  Volume3 fixed, moving;
};

SmallPair small_pair(std::uint64_t seed, int n = 12) {
  Gen gen(seed);
  const Geometry g = cube(n, Vec3(0.8, 0.9, 1.1));
  Volume3 f = test::random_volume(g, gen, 1.5);
  Volume3 m = test::random_volume(g, gen, 1.5);
  // Partially correlated so the metric is neither saturated nor flat.
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = 0.7f * f.data()[i] + 0.3f * m.data()[i];
  return {affine(f, 100.0, 20.0), affine(m, 80.0, -5.0)};
}

Volume3 blob_image(const Geometry& g, const Vec3& shift, std::uint64_t seed) {
  Gen gen(seed);
  std::vector<Vec3> centers;
  std::vector<double> amps;
  const Vec3 extent = g.far_corner() + Vec3::Constant(20.0);
  for (int b = 0; b < 120; ++b) {
    centers.push_back(Vec3(gen.uniform(-20, extent.x()), gen.uniform(-20, extent.y()),
                           gen.uniform(-20, extent.z())));
    amps.push_back(gen.uniform(-1.0, 1.0));
  }
  Volume3 v(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = g.center(i, j, k) + shift;
        double s = 0.0;
        for (std::size_t b = 0; b < centers.size(); ++b)
          s += amps[b] * std::exp(-(p - centers[b]).squaredNorm() / (2 * 9.0));
        v(i, j, k) = static_cast<float>(100.0 * s);
      }
  return v;
}

}  // namespace

TEST_CASE("config validation") {
  RegistrationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.lcc_sigma_voxels = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.control_spacing_voxels = {6, 0, 6};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.pyramid_levels = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.tv_epsilon_mm = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.lcc_epsilon = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("self-correlation gives -L v") {
  Gen gen(1);
  const Geometry g = cube(16, Vec3(0.63, 0.63, 1.0));
  const Volume3 v = affine(test::random_volume(g, gen, 1.0), 50.0, 10.0);
  RegistrationConfig cfg;
  const ControlGrid zero(g, {6, 6, 6});
  const double expected = -static_cast<double>(g.voxel_count()) * g.voxel_volume();
  const auto e = lcc_energy(v, v, zero, cfg);
  CHECK(std::abs(e.value - expected) <= 1e-3 * std::abs(expected));

  const auto scaled = lcc_energy(affine(v, 2.0, 100.0), v, zero, cfg);
  CHECK(std::abs(scaled.value - e.value) <= 1e-3 * std::abs(e.value));

  const auto obj = objective(v, v, zero, cfg);
  CHECK(std::abs(obj.total - expected) <= 1e-3 * std::abs(expected));
  CHECK(obj.regularizer == 0.0);
}

TEST_CASE("data term is invariant to positive affine rescaling") {
  Gen gen(5);
  auto [f, m] = small_pair(6, 14);
  RegistrationConfig cfg;
  ControlGrid cg(f.geometry(), {4, 4, 4});
  for (int trial = 0; trial < 5; ++trial) {
    randomize(cg, gen, 0.8);
    const double base = lcc_energy(f, m, cg, cfg).value;
    const double a = gen.uniform(0.2, 5.0), b = gen.uniform(-200, 200);
    CHECK(std::abs(lcc_energy(affine(f, a, b), m, cg, cfg).value - base) <= 1e-3 * std::abs(base));
    CHECK(std::abs(lcc_energy(f, affine(m, a, b), cg, cfg).value - base) <= 1e-3 * std::abs(base));
  }
}

TEST_CASE("geometry mismatch is rejected") {
  Gen gen(2);
  const Volume3 a = test::random_volume(cube(10), gen);
  const Volume3 b = test::random_volume(cube(11), gen);
  RegistrationConfig cfg;
  CHECK_THROWS_AS(lcc_energy(a, b, ControlGrid(a.geometry(), {3, 3, 3}), cfg), ValidationError);
  CHECK_THROWS_AS(register_volumes(a, b, cfg), ValidationError);
}

TEST_CASE("TV energy examples") {
  const ControlGrid base(cube(19, Vec3(0.63, 0.63, 1.0)), {6, 6, 6});
  ControlGrid g = base;
  CHECK(tv_energy(g, 1e-3).value == 0.0);
  for (auto& d : g.displacements()) d = Vec3(1.5, -0.2, 3.0);
  CHECK(tv_energy(g, 1e-3).value == 0.0);

  g = base;
  g.at(1, 2, 1) = Vec3(0.7, 0.0, 0.0);
  CHECK(tv_energy(g, 1e-3).value == doctest::Approx(tv_oracle(g, 1e-3)).epsilon(1e-12));

  Gen gen(3);
  randomize(g, gen, 1.0);
  CHECK(tv_energy(g, 1e-3).value == doctest::Approx(tv_oracle(g, 1e-3)).epsilon(1e-12));
}

TEST_CASE("TV is shift invariant and positively homogeneous") {
  Gen gen(17);
  for (int trial = 0; trial < 10; ++trial) {
    ControlGrid g(cube(gen.integer(8, 20)), {gen.integer(2, 5), gen.integer(2, 5), gen.integer(2, 5)});
    randomize(g, gen, 1.0);
    const double e = tv_energy(g, 1e-6).value;
    ControlGrid shifted = g, scaled = g;
    const Vec3 c = gen.vec(-3, 3);
    const double alpha = gen.uniform(0.1, 4.0);
    for (auto& d : shifted.displacements()) d += c;
    for (auto& d : scaled.displacements()) d *= alpha;
    CHECK(tv_energy(shifted, 1e-6).value == doctest::Approx(e).epsilon(1e-9));
    CHECK(std::abs(tv_energy(scaled, 1e-6).value - alpha * e) <= 1e-3 * alpha * e);
  }
}

TEST_CASE("analytic gradients match central differences") {
  RegistrationConfig cfg;
  cfg.lambda = 0.05;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    Gen gen(seed * 7);
    auto [f, m] = small_pair(seed);
    ControlGrid g(f.geometry(), {6, 6, 6});
    REQUIRE(g.grid_dims() == Index3{3, 3, 3});
    randomize(g, gen, 1.0);

    const auto ed = lcc_energy(f, m, g, cfg);
    check_gradient(g, ed.gradient, [&](const ControlGrid& x) { return lcc_energy(f, m, x, cfg).value; }, kStep, 1e-4);

    const auto er = tv_energy(g, cfg.tv_epsilon_mm);
    check_gradient(g, er.gradient, [&](const ControlGrid& x) { return tv_energy(x, cfg.tv_epsilon_mm).value; }, kStep, 1e-4);

    const auto tot = objective(f, m, g, cfg);
    CHECK(tot.total == doctest::Approx(ed.value + cfg.lambda * er.value).epsilon(1e-12));
    check_gradient(g, tot.gradient, [&](const ControlGrid& x) { return objective(f, m, x, cfg).total; }, kStep, 1e-4);
  }
}

TEST_CASE("lambda zero objective equals the data term") {
  auto [f, m] = small_pair(9);
  Gen gen(9);
  ControlGrid g(f.geometry(), {4, 4, 4});
  randomize(g, gen, 0.5);
  RegistrationConfig cfg;
  cfg.lambda = 0.0;
  const auto obj = objective(f, m, g, cfg);
  const auto ed = lcc_energy(f, m, g, cfg);
  CHECK(obj.total == ed.value);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK((obj.gradient[i] - ed.gradient[i]).norm() == 0.0);
}

TEST_CASE("identical images stay at the identity") {
  Gen gen(12);
  const Volume3 v = affine(test::random_volume(cube(24, Vec3(0.8, 0.8, 1.0)), gen, 1.5), 100, 0);
  RegistrationConfig cfg;
  cfg.max_iterations = 30;
  const auto r = register_volumes(v, v, cfg);
  CHECK(r.control_grid.max_displacement() <= 0.05);
  CHECK(r.control_grid.anchor().matches(v.geometry()));
}

TEST_CASE("one control step translation is recovered") {
  const Geometry g = cube(36);
  RegistrationConfig cfg;
  cfg.lambda = 1e-4;
  const double step = cfg.control_spacing_voxels[0] * g.spacing.x();
  // moving(x + t) = fixed(x), so the recovered field is d = t.
  const Volume3 moving = blob_image(g, Vec3::Zero(), 31);
  const Volume3 fixed = blob_image(g, Vec3(step, 0, 0), 31);
  const auto r = register_volumes(fixed, moving, cfg);
  const auto d = dense_field(r.control_grid, g);
  double sum = 0.0;
  int n = 0;
  for (int k = 12; k < 24; ++k)
    for (int j = 12; j < 24; ++j)
      for (int i = 12; i < 24; ++i) {
        sum += d.at(g.linear(i, j, k)).x();
        ++n;
      }
  const double mean = sum / n;
  CAPTURE(mean);
  CHECK(std::abs(mean - step) <= 0.1 * step);
}

TEST_CASE("history, determinism and export") {
  auto [f, m] = small_pair(3, 20);
  RegistrationConfig cfg;
  cfg.pyramid_levels = 2;
  cfg.max_iterations = 25;
  cfg.control_spacing_voxels = {4, 4, 4};
  const auto a = register_volumes(f, m, cfg);
  const auto b = register_volumes(f, m, cfg);
  CHECK(a.control_grid.displacements() == b.control_grid.displacements());
  REQUIRE(a.objective_history.size() == b.objective_history.size());
  CHECK(a.iterations_used.size() == 2u);

  for (std::size_t i = 0; i < a.objective_history.size(); ++i) {
    const auto& h = a.objective_history[i];
    CHECK(h.total == b.objective_history[i].total);
    CHECK(std::abs(h.total - (h.data_term + cfg.lambda * h.regularizer)) <= 1e-10 * std::abs(h.total));
    if (i > 0 && a.objective_history[i - 1].level == h.level) {
      CHECK(h.total <= a.objective_history[i - 1].total);
    }
  }

  TempDir dir("hist");
  save_history_csv(a.objective_history, dir / "h.csv");
  std::ifstream in(dir / "h.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "level,iteration,E_D,E_R,total");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) rows += !line.empty();
  CHECK(rows == a.objective_history.size());
}

TEST_CASE("warp_with_grid with a zero grid is the identity") {
  Gen gen(4);
  const Volume3 v = test::random_volume(cube(9), gen);
  const Volume3 w = warp_with_grid(v, ControlGrid(v.geometry(), {3, 3, 3}));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(w.data()[i] == doctest::Approx(v.data()[i]).epsilon(1e-6));
}
