#include "wallkin_tools/pipeline_config.hpp"

#include <iomanip>
#include <set>
#include <sstream>

#include "wallkin/error.hpp"

namespace wallkin::cli {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",
      "phantom.dims", "phantom.spacing_mm", "phantom.inner_radius_mm", "phantom.outer_radius_mm",
      "phantom.intensities", "phantom.blur_sigma_voxels", "phantom.noise_sigma", "phantom.rng_seed",
      "field.kind", "field.dr_max_mm", "field.axial_profile", "field.axis_point_mm", "field.axis_dir",
      "field.length_mm", "field.core_radius_mm", "field.axial_amplitude_mm",
      "input.fixed", "input.moving", "input.mask", "input.grid", "input.surface",
      "input.kinematics", "input.truth", "input.truth_kinematics", "input.fixed_phase",
      "registration.lambda", "registration.lcc_sigma_voxels", "registration.control_spacing",
      "registration.pyramid_levels", "registration.max_iterations",
      "registration.gradient_tolerance", "registration.tv_epsilon_mm", "registration.lcc_epsilon",
      "registration.presmooth_sigma_voxels",
      "surface.iso", "surface.outer_only", "surface.slice_axis", "surface.normal_k",
      "curvature.k_neighbors", "curvature.inlier_threshold_mm", "curvature.max_iterations",
      "curvature.axis_cone_deg", "curvature.reference_axis", "curvature.r_min_mm",
      "curvature.r_max_mm", "curvature.confidence", "curvature.min_inlier_fraction",
      "kinematics.sign", "kinematics.signed_percentiles", "kinematics.field",
      "kinematics.crop_lo", "kinematics.crop_hi",
      "verify.nrmse_norm", "verify.qq_points", "verify.histogram_bins",
      "thresholds.normal_r2_min", "thresholds.normal_nrmse_max", "thresholds.strain_p99_rel_max",
  };
  return keys;
}

std::filesystem::path path_or(const KeyValues& kv, const std::string& key,
                              const std::filesystem::path& fallback) {
  return kv.has(key) ? std::filesystem::path(kv.get_string(key)) : fallback;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

std::string fmt(const Index3& v) {
  return std::to_string(v[0]) + " " + std::to_string(v[1]) + " " + std::to_string(v[2]);
}

}  // namespace

PipelineConfig resolve_config(const KeyValues& kv, const std::filesystem::path& output, bool resume) {
  for (const auto& [key, value] : kv.entries()) {
    if (!known_keys().count(key)) throw_validation("unknown config key '" + key + "'");
  }
  PipelineConfig c;
  c.raw = kv;
  c.output = output;
  c.resume = resume;
  const int seed = kv.get_int("seed", 0);
  if (seed < 0) throw_validation("seed: must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  c.phantom = phantom_from_config(kv);
  c.field = field_from_config(kv, c.phantom);

  const std::string phase = kv.get_string("input.fixed_phase", "diastole");
  if (phase == "diastole") {
    c.fixed_phase = FixedPhase::diastole;
  } else if (phase == "systole") {
    c.fixed_phase = FixedPhase::systole;
  } else {
    throw_validation("input.fixed_phase: expected diastole or systole, got '" + phase + "'");
  }
  const bool dia = c.fixed_phase == FixedPhase::diastole;
  c.fixed = path_or(kv, "input.fixed", output / (dia ? "diastole.vol" : "systole.vol"));
  c.moving = path_or(kv, "input.moving", output / (dia ? "systole.vol" : "diastole.vol"));
  c.mask = path_or(kv, "input.mask", output / "wall_mask.vol");
  c.grid = path_or(kv, "input.grid", output / "grid.cgrid");
  c.surface = path_or(kv, "input.surface", output / "surface.ply");
  c.kinematics = path_or(kv, "input.kinematics", output / "kinematics.ply");
  c.truth = path_or(kv, "input.truth", output / "truth_field.cfg");
  if (kv.has("input.truth_kinematics")) c.truth_kinematics = kv.get_string("input.truth_kinematics");

  auto& r = c.registration;
  r.lambda = kv.get_double("registration.lambda", r.lambda);
  r.lcc_sigma_voxels = kv.get_double("registration.lcc_sigma_voxels", r.lcc_sigma_voxels);
  r.control_spacing_voxels = kv.get_index3("registration.control_spacing", r.control_spacing_voxels);
  r.pyramid_levels = kv.get_int("registration.pyramid_levels", r.pyramid_levels);
  r.max_iterations = kv.get_int("registration.max_iterations", r.max_iterations);
  r.gradient_tolerance = kv.get_double("registration.gradient_tolerance", r.gradient_tolerance);
  r.tv_epsilon_mm = kv.get_double("registration.tv_epsilon_mm", r.tv_epsilon_mm);
  r.lcc_epsilon = kv.get_double("registration.lcc_epsilon", r.lcc_epsilon);
  r.presmooth_sigma_voxels = kv.get_double("registration.presmooth_sigma_voxels", r.presmooth_sigma_voxels);
  r.rng_seed = c.seed;
  r.validate();

  c.iso = kv.get_double("surface.iso", c.iso);
  c.outer_only = kv.get_bool("surface.outer_only", c.outer_only);
  c.slice_axis = kv.get_int("surface.slice_axis", c.slice_axis);
  if (c.slice_axis < 0 || c.slice_axis > 2) throw_validation("surface.slice_axis: must be 0, 1 or 2");
  c.normal_k = kv.get_int("surface.normal_k", c.normal_k);
  if (c.normal_k < 3) throw_validation("surface.normal_k: must be >= 3");

  auto& cp = c.curvature;
  // Voxel-centre clouds are terraced at the voxel scale, so the pipeline
  // default neighbourhood is much wider than the library default.
  cp.k_neighbors = kv.get_int("curvature.k_neighbors", 800);
  cp.inlier_threshold_mm = kv.get_double("curvature.inlier_threshold_mm", cp.inlier_threshold_mm);
  cp.max_iterations = kv.get_int("curvature.max_iterations", cp.max_iterations);
  cp.axis_cone_deg = kv.get_double("curvature.axis_cone_deg", cp.axis_cone_deg);
  cp.reference_axis = kv.get_vec3("curvature.reference_axis", cp.reference_axis);
  cp.r_min_mm = kv.get_double("curvature.r_min_mm", cp.r_min_mm);
  cp.r_max_mm = kv.get_double("curvature.r_max_mm", cp.r_max_mm);
  cp.confidence = kv.get_double("curvature.confidence", cp.confidence);
  cp.min_inlier_fraction = kv.get_double("curvature.min_inlier_fraction", cp.min_inlier_fraction);
  cp.rng_seed = c.seed;
  cp.validate();
  cp.reference_axis.normalize();

  auto& ko = c.kinematics_options;
  ko.sign = kv.get_double("kinematics.sign", dia ? 1.0 : -1.0);
  if (ko.sign != 1.0 && ko.sign != -1.0) throw_validation("kinematics.sign: must be 1 or -1");
  ko.signed_percentiles = kv.get_bool("kinematics.signed_percentiles", false);
  c.field_source = kv.get_string("kinematics.field", c.field_source);
  if (c.field_source != "grid" && c.field_source != "dense") {
    throw_validation("kinematics.field: expected grid or dense, got '" + c.field_source + "'");
  }
  if (kv.has("kinematics.crop_lo") || kv.has("kinematics.crop_hi")) {
    if (!kv.has("kinematics.crop_lo") || !kv.has("kinematics.crop_hi")) {
      throw_validation("kinematics.crop_lo and kinematics.crop_hi must be given together");
    }
    CropWindow w{kv.get_index3("kinematics.crop_lo"), kv.get_index3("kinematics.crop_hi")};
    for (int a = 0; a < 3; ++a) {
      if (w.lo[a] < 0 || w.hi[a] <= w.lo[a]) {
        throw_validation("kinematics.crop_hi: must exceed kinematics.crop_lo on every axis");
      }
    }
    c.crop = w;
  }

  const std::string norm = kv.get_string("verify.nrmse_norm", "range");
  if (norm == "range") {
    c.report.nrmse_norm = NrmseNorm::range;
  } else if (norm == "std") {
    c.report.nrmse_norm = NrmseNorm::std_dev;
  } else {
    throw_validation("verify.nrmse_norm: expected range or std, got '" + norm + "'");
  }
  c.report.qq_points = kv.get_int("verify.qq_points", c.report.qq_points);
  if (c.report.qq_points < 2) throw_validation("verify.qq_points: must be >= 2");
  c.report.histogram_bins = kv.get_int("verify.histogram_bins", c.report.histogram_bins);
  if (c.report.histogram_bins < 1) throw_validation("verify.histogram_bins: must be >= 1");

  auto& t = c.thresholds;
  t.normal_r2_min = kv.get_double("thresholds.normal_r2_min", t.normal_r2_min);
  t.normal_nrmse_max = kv.get_double("thresholds.normal_nrmse_max", t.normal_nrmse_max);
  t.strain_p99_rel_max = kv.get_double("thresholds.strain_p99_rel_max", t.strain_p99_rel_max);
  return c;
}

KeyValues effective_config(const PipelineConfig& c) {
  KeyValues kv;
  kv.set("seed", std::to_string(c.seed));
  const auto& p = c.phantom;
  kv.set("phantom.dims", fmt(p.dims));
  kv.set("phantom.spacing_mm", fmt(p.spacing));
  kv.set("phantom.inner_radius_mm", fmt(p.inner_radius_mm));
  kv.set("phantom.outer_radius_mm", fmt(p.outer_radius_mm));
  kv.set("phantom.intensities", fmt(Vec3(p.background, p.wall, p.lumen)));
  kv.set("phantom.blur_sigma_voxels", fmt(p.blur_sigma_voxels));
  kv.set("phantom.noise_sigma", fmt(p.noise_sigma));
  kv.set("phantom.rng_seed", std::to_string(p.rng_seed));
  const KeyValues field = field_to_config(c.field);
  for (const auto& [key, value] : field.entries()) kv.set("field." + key, value);
  kv.set("input.fixed_phase", c.fixed_phase == FixedPhase::diastole ? "diastole" : "systole");
  kv.set("input.fixed", c.fixed.string());
  kv.set("input.moving", c.moving.string());
  kv.set("input.mask", c.mask.string());
  kv.set("input.grid", c.grid.string());
  kv.set("input.surface", c.surface.string());
  kv.set("input.kinematics", c.kinematics.string());
  kv.set("input.truth", c.truth.string());
  if (c.truth_kinematics) kv.set("input.truth_kinematics", c.truth_kinematics->string());
  const auto& r = c.registration;
  kv.set("registration.lambda", fmt(r.lambda));
  kv.set("registration.lcc_sigma_voxels", fmt(r.lcc_sigma_voxels));
  kv.set("registration.control_spacing", fmt(r.control_spacing_voxels));
  kv.set("registration.pyramid_levels", std::to_string(r.pyramid_levels));
  kv.set("registration.max_iterations", std::to_string(r.max_iterations));
  kv.set("registration.gradient_tolerance", fmt(r.gradient_tolerance));
  kv.set("registration.tv_epsilon_mm", fmt(r.tv_epsilon_mm));
  kv.set("registration.lcc_epsilon", fmt(r.lcc_epsilon));
  kv.set("registration.presmooth_sigma_voxels", fmt(r.presmooth_sigma_voxels));
  kv.set("surface.iso", fmt(c.iso));
  kv.set("surface.outer_only", c.outer_only ? "true" : "false");
  kv.set("surface.slice_axis", std::to_string(c.slice_axis));
  kv.set("surface.normal_k", std::to_string(c.normal_k));
  const auto& cp = c.curvature;
  kv.set("curvature.k_neighbors", std::to_string(cp.k_neighbors));
  kv.set("curvature.inlier_threshold_mm", fmt(cp.inlier_threshold_mm));
  kv.set("curvature.max_iterations", std::to_string(cp.max_iterations));
  kv.set("curvature.axis_cone_deg", fmt(cp.axis_cone_deg));
  kv.set("curvature.reference_axis", fmt(cp.reference_axis));
  kv.set("curvature.r_min_mm", fmt(cp.r_min_mm));
  kv.set("curvature.r_max_mm", fmt(cp.r_max_mm));
  kv.set("curvature.confidence", fmt(cp.confidence));
  kv.set("curvature.min_inlier_fraction", fmt(cp.min_inlier_fraction));
  kv.set("kinematics.sign", c.kinematics_options.sign > 0 ? "1" : "-1");
  kv.set("kinematics.signed_percentiles", c.kinematics_options.signed_percentiles ? "true" : "false");
  kv.set("kinematics.field", c.field_source);
  if (c.crop) {
    kv.set("kinematics.crop_lo", fmt(c.crop->lo));
    kv.set("kinematics.crop_hi", fmt(c.crop->hi));
  }
  kv.set("verify.nrmse_norm", c.report.nrmse_norm == NrmseNorm::range ? "range" : "std");
  kv.set("verify.qq_points", std::to_string(c.report.qq_points));
  kv.set("verify.histogram_bins", std::to_string(c.report.histogram_bins));
  kv.set("thresholds.normal_r2_min", fmt(c.thresholds.normal_r2_min));
  kv.set("thresholds.normal_nrmse_max", fmt(c.thresholds.normal_nrmse_max));
  kv.set("thresholds.strain_p99_rel_max", fmt(c.thresholds.strain_p99_rel_max));
  return kv;
}

}  // namespace wallkin::cli
