#include <benchmark/benchmark.h>

#include <random>

#include "wallkin/cylinder.hpp"
#include "wallkin/filters.hpp"
#include "wallkin/kdtree.hpp"
#include "wallkin/registration.hpp"
#include "wallkin/synthetic.hpp"

using namespace wallkin;

namespace {

Volume3 noise_volume(int n, std::uint64_t seed) {
  Geometry g;
  g.dims = {n, n, n};
  g.spacing = Vec3(0.63, 0.63, 1.0);
  Volume3 v(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (float& x : v.data()) x = static_cast<float>(normal(rng));
  return gaussian_smooth(v, 1.5 * g.spacing);
}

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return pts;
}

}  // namespace

static void BM_GaussianSmooth(benchmark::State& state) {
  const Volume3 v = noise_volume(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth(v, Vec3(1.26, 1.26, 2.0)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(v.size()));
}
BENCHMARK(BM_GaussianSmooth)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_LccEvaluate(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Volume3 f = noise_volume(n, 1), m = noise_volume(n, 2);
  const RegistrationConfig cfg;
  const LccMetric metric(f, m, cfg);
  ControlGrid g(f.geometry(), cfg.control_spacing_voxels);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& d : g.displacements()) d = Vec3(u(rng), u(rng), u(rng));
  for (auto _ : state) benchmark::DoNotOptimize(metric.evaluate(g));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.size()));
}
BENCHMARK(BM_LccEvaluate)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_TvEnergy(benchmark::State& state) {
  Geometry geo;
  geo.dims = {112, 112, 74};
  geo.spacing = Vec3(0.63, 0.63, 1.0);
  ControlGrid g(geo, {6, 6, 6});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& d : g.displacements()) d = Vec3(u(rng), u(rng), u(rng));
  for (auto _ : state) benchmark::DoNotOptimize(tv_energy(g, 1e-3));
}
BENCHMARK(BM_TvEnergy);

static void BM_KdTreeBuild(benchmark::State& state) {
  const auto pts = random_points(static_cast<std::size_t>(state.range(0)), 5);
  for (auto _ : state) benchmark::DoNotOptimize(KdTree(pts));
}
BENCHMARK(BM_KdTreeBuild)->Arg(2000)->Arg(20000);

static void BM_KdTreeKnn(benchmark::State& state) {
  const auto pts = random_points(20000, 6);
  const auto queries = random_points(256, 7);
  const KdTree tree(pts);
  const auto k = static_cast<std::size_t>(state.range(0));
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tree.knn(queries[q++ % queries.size()], k));
}
BENCHMARK(BM_KdTreeKnn)->Arg(30)->Arg(800);

static void BM_CylinderFit(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> th(-0.6, 0.6), z(-4, 4);
  std::vector<Vec3> pts, nrm;
  for (int i = 0; i < state.range(0); ++i) {
    const double t = th(rng);
    const Vec3 radial(std::cos(t), std::sin(t), 0.0);
    pts.push_back(25.0 * radial + Vec3(0, 0, z(rng)));
    nrm.push_back(radial);
  }
  const CurvatureParams params;
  for (auto _ : state) benchmark::DoNotOptimize(fit_cylinder_msac(pts, nrm, params));
}
BENCHMARK(BM_CylinderFit)->Arg(60)->Arg(800);

static void BM_PhantomWarp(benchmark::State& state) {
  PhantomSpec spec;
  spec.noise_sigma = 0.0;
  const Phantom ph = generate_phantom(spec);
  const AnalyticField field = default_field(spec);
  for (auto _ : state) benchmark::DoNotOptimize(warp_volume(ph.image, field));
}
BENCHMARK(BM_PhantomWarp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
