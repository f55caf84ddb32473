#include "wallkin/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"
#include "wallkin/parallel.hpp"

namespace wallkin {

Geometry PhantomSpec::geometry() const {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  g.origin = Vec3::Zero();
  return g;
}

Vec3 PhantomSpec::axis_point() const {
  const Vec3 far = geometry().far_corner();
  return {0.5 * far.x(), 0.5 * far.y(), 0.0};
}

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 4) throw_validation("phantom.dims: every dimension must be >= 4");
    if (!(spacing[a] > 0.0)) throw_validation("phantom.spacing_mm: must be positive");
  }
  if (!(inner_radius_mm > 0.0)) throw_validation("phantom.inner_radius_mm: must be positive");
  if (!(outer_radius_mm > inner_radius_mm)) {
    throw_validation("phantom.outer_radius_mm: must exceed phantom.inner_radius_mm");
  }
  const Vec3 far = geometry().far_corner();
  const double half_extent = 0.5 * std::min(far.x(), far.y());
  if (!(outer_radius_mm < half_extent)) {
    throw_validation("phantom.outer_radius_mm: must be below half the lateral extent (" +
                     std::to_string(half_extent) + " mm)");
  }
  if (blur_sigma_voxels < 0.0) throw_validation("phantom.blur_sigma_voxels: must be >= 0");
  if (noise_sigma < 0.0) throw_validation("phantom.noise_sigma: must be >= 0");
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Geometry geom = spec.geometry();
  const Vec3 c = spec.axis_point();
  Phantom out{Volume3(geom), Volume3(geom)};
  for (int k = 0; k < geom.dims[2]; ++k)
    for (int j = 0; j < geom.dims[1]; ++j)
      for (int i = 0; i < geom.dims[0]; ++i) {
        const Vec3 p = geom.center(i, j, k);
        const double rho = std::hypot(p.x() - c.x(), p.y() - c.y());
        double value = spec.background;
        if (rho < spec.inner_radius_mm) {
          value = spec.lumen;
        } else if (rho <= spec.outer_radius_mm) {
          value = spec.wall;
          out.wall_mask(i, j, k) = 1.0f;
        }
        out.image(i, j, k) = static_cast<float>(value);
      }
  if (spec.blur_sigma_voxels > 0.0) {
    out.image = gaussian_smooth(out.image, spec.blur_sigma_voxels * spec.spacing);
  }
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.rng_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (float& v : out.image.data()) v = static_cast<float>(v + noise(rng));
  }
  return out;
}

void AnalyticField::validate() const {
  if (kind != "radial_inflation") throw_validation("field.kind: only radial_inflation is supported");
  if (!(dr_max_mm >= 0.0)) throw_validation("field.dr_max_mm: must be >= 0");
  if (!(length_mm > 0.0)) throw_validation("field.length_mm: must be positive");
  if (core_radius_mm < 0.0) throw_validation("field.core_radius_mm: must be >= 0");
  if (std::abs(axis_dir.norm() - 1.0) > 1e-9) throw_validation("field.axis_dir: must be a unit vector");
}

double AnalyticField::profile_at(double z) const {
  if (z < 0.0 || z > length_mm) return 0.0;
  if (profile == AxialProfile::constant) return 1.0;
  const double s = std::sin(std::numbers::pi * z / length_mm);
  return s * s;
}

AnalyticField default_field(const PhantomSpec& spec, double dr_max_mm) {
  AnalyticField f;
  f.dr_max_mm = dr_max_mm;
  f.axis_point = spec.axis_point();
  f.axis_dir = Vec3::UnitZ();
  f.length_mm = (spec.dims[2] - 1) * spec.spacing.z();
  return f;
}

Vec3 eval_field(const AnalyticField& f, const Vec3& p) {
  const Vec3 w = p - f.axis_point;
  const double z = w.dot(f.axis_dir);
  const Vec3 radial = w - z * f.axis_dir;
  const double rho = radial.norm();
  const double prof = f.profile_at(z);
  if (prof == 0.0) return Vec3::Zero();
  double taper = 1.0;
  if (f.core_radius_mm > 0.0) taper = std::min(rho / f.core_radius_mm, 1.0);
  Vec3 u = f.axial_amplitude_mm * f.axis_dir;
  if (rho >= 1e-9) u += f.dr_max_mm * radial / rho;
  else if (f.core_radius_mm <= 0.0) return Vec3::Zero();
  return taper * prof * u;
}

namespace {

template <class Forward>
Vec3 invert_impl(const Forward& forward, const Vec3& p, double tol, int max_it) {
  Vec3 u = -forward(p);
  for (int it = 0; it < max_it; ++it) {
    const Vec3 next = -forward(p + u);
    const double step = (next - u).norm();
    u = next;
    if (step < tol) return u;
  }
  throw_numeric("invert_field: fixed-point iteration did not converge (deformation too large)");
}

}  // namespace

Vec3 invert_field(const AnalyticField& f, const Vec3& p, double tol_mm, int max_iterations) {
  return invert_impl([&](const Vec3& q) { return eval_field(f, q); }, p, tol_mm, max_iterations);
}

Vec3 invert_field(const VectorVolume3& f, const Vec3& p, double tol_mm, int max_iterations) {
  return invert_impl([&](const Vec3& q) { return f.sample(q); }, p, tol_mm, max_iterations);
}

Volume3 warp_volume(const Volume3& v, const AnalyticField& f) {
  f.validate();
  const Geometry& g = v.geometry();
  Volume3 out(g);
  const auto src = v.data();
  auto dst = out.data();
  const auto slices = static_cast<std::size_t>(g.dims[2]);
  parallel_chunks(slices, slices, [&](std::size_t k0, std::size_t k1, std::size_t) {
    for (auto k = static_cast<int>(k0); k < static_cast<int>(k1); ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          const Vec3 x = g.center(i, j, k);
          const Vec3 q = x + invert_field(f, x);
          dst[g.linear(i, j, k)] = static_cast<float>(sample_trilinear(src, g.dims, g.to_index(q)));
        }
  });
  return out;
}

std::vector<Vec3> ground_truth_at_points(const AnalyticField& f, const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back(eval_field(f, p));
  return out;
}

std::vector<Vec3> ground_truth_at_deformed_points(const AnalyticField& f, const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points) out.push_back(-invert_field(f, p, 1e-9, 200));
  return out;
}

PhantomSpec phantom_from_config(const KeyValues& kv) {
  PhantomSpec s;
  s.dims = kv.get_index3("phantom.dims", s.dims);
  s.spacing = kv.get_vec3("phantom.spacing_mm", s.spacing);
  s.inner_radius_mm = kv.get_double("phantom.inner_radius_mm", s.inner_radius_mm);
  s.outer_radius_mm = kv.get_double("phantom.outer_radius_mm", s.outer_radius_mm);
  const Vec3 levels = kv.get_vec3("phantom.intensities", Vec3(s.background, s.wall, s.lumen));
  s.background = levels.x();
  s.wall = levels.y();
  s.lumen = levels.z();
  s.blur_sigma_voxels = kv.get_double("phantom.blur_sigma_voxels", s.blur_sigma_voxels);
  s.noise_sigma = kv.get_double("phantom.noise_sigma", s.noise_sigma);
  s.rng_seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  s.rng_seed = static_cast<std::uint64_t>(kv.get_int("phantom.rng_seed", static_cast<int>(s.rng_seed)));
  s.validate();
  return s;
}

namespace {

AxialProfile parse_profile(const std::string& s, const std::string& key) {
  if (s == "sin2") return AxialProfile::sin2;
  if (s == "constant") return AxialProfile::constant;
  throw_validation(key + ": expected sin2 or constant, got '" + s + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

AnalyticField read_field(const KeyValues& kv, const std::string& prefix, AnalyticField f) {
  f.kind = kv.get_string(prefix + "kind", f.kind);
  f.dr_max_mm = kv.get_double(prefix + "dr_max_mm", f.dr_max_mm);
  if (kv.has(prefix + "axial_profile")) {
    f.profile = parse_profile(kv.get_string(prefix + "axial_profile"), prefix + "axial_profile");
  }
  f.axis_point = kv.get_vec3(prefix + "axis_point_mm", f.axis_point);
  f.axis_dir = kv.get_vec3(prefix + "axis_dir", f.axis_dir);
  if (!(f.axis_dir.norm() > 0.0)) throw_validation(prefix + "axis_dir: must be non-zero");
  f.axis_dir.normalize();
  f.length_mm = kv.get_double(prefix + "length_mm", f.length_mm);
  f.core_radius_mm = kv.get_double(prefix + "core_radius_mm", f.core_radius_mm);
  f.axial_amplitude_mm = kv.get_double(prefix + "axial_amplitude_mm", f.axial_amplitude_mm);
  f.validate();
  return f;
}

}  // namespace

AnalyticField field_from_config(const KeyValues& kv, const PhantomSpec& spec) {
  return read_field(kv, "field.", default_field(spec));
}

KeyValues field_to_config(const AnalyticField& f) {
  KeyValues kv;
  kv.set("kind", f.kind);
  kv.set("dr_max_mm", fmt(f.dr_max_mm));
  kv.set("axial_profile", f.profile == AxialProfile::sin2 ? "sin2" : "constant");
  kv.set("axis_point_mm", fmt(f.axis_point));
  kv.set("axis_dir", fmt(f.axis_dir));
  kv.set("length_mm", fmt(f.length_mm));
  kv.set("core_radius_mm", fmt(f.core_radius_mm));
  kv.set("axial_amplitude_mm", fmt(f.axial_amplitude_mm));
  return kv;
}

void save_field(const AnalyticField& f, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_io("cannot write " + path.string());
  out << "# analytic ground-truth displacement field\n" << field_to_config(f).to_string();
  if (!out) throw_io("write failed: " + path.string());
}

AnalyticField load_field(const std::filesystem::path& path) {
  return read_field(KeyValues::parse_file(path), "", AnalyticField{});
}

}  // namespace wallkin
