#include "wallkin_tools/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"
#include "wallkin/surface.hpp"
#include "wallkin/volume_io.hpp"

namespace wallkin::cli {

namespace fs = std::filesystem;

namespace {

void require_input(const fs::path& p, const std::string& key) {
  if (!fs::exists(p)) throw_validation(key + ": file not found: " + p.string());
}

void prepare_output(const PipelineConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec || !fs::is_directory(cfg.output)) {
    throw_validation("output directory cannot be created: " + cfg.output.string());
  }
}

void log(const std::string& stage, const std::string& msg) {
  std::cerr << "[" << stage << "] " << msg << '\n';
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

PointCloud crop_cloud(const PointCloud& cloud, const Geometry& g, const CropWindow& w) {
  PointCloud out;
  out.attributes = cloud.attributes;
  for (auto& [name, values] : out.attributes) values.clear();
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const Vec3 idx = g.to_index(cloud.points[p]);
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double r = std::round(idx[a]);
      inside = inside && r >= w.lo[a] && r < w.hi[a];
    }
    if (!inside) continue;
    out.points.push_back(cloud.points[p]);
    out.valid.push_back(cloud.valid[p]);
    if (cloud.has_normals()) out.normals.push_back(cloud.normals[p]);
    if (cloud.has_radius()) out.radius.push_back(cloud.radius[p]);
    for (std::size_t a = 0; a < cloud.attributes.size(); ++a) {
      out.attributes[a].second.push_back(cloud.attributes[a].second[p]);
    }
  }
  if (out.size() == 0) throw_validation("kinematics.crop_lo/crop_hi: the crop window contains no wall points");
  return out;
}

bool outputs_exist(const PipelineConfig& cfg, std::initializer_list<const char*> names) {
  for (const char* n : names)
    if (!fs::exists(cfg.out(n))) return false;
  return true;
}

}  // namespace

void cmd_synth(const PipelineConfig& cfg) {
  prepare_output(cfg);
  Stopwatch sw;
  const Phantom ph = generate_phantom(cfg.phantom);
  const Volume3 systole = warp_volume(ph.image, cfg.field);
  save_volume(ph.image, cfg.out(files::diastole));
  save_volume(ph.wall_mask, cfg.out(files::wall_mask));
  save_volume(systole, cfg.out(files::systole));
  save_field(cfg.field, cfg.out(files::truth_field));
  log("synth", "phantom " + std::to_string(cfg.phantom.dims[0]) + "x" + std::to_string(cfg.phantom.dims[1]) +
                   "x" + std::to_string(cfg.phantom.dims[2]) + " written in " +
                   std::to_string(sw.seconds()) + " s");
}

void cmd_register(const PipelineConfig& cfg) {
  require_input(cfg.fixed, "input.fixed");
  require_input(cfg.moving, "input.moving");
  prepare_output(cfg);
  Stopwatch sw;
  const Volume3 fixed = load_volume(cfg.fixed);
  const Volume3 moving = load_volume(cfg.moving);
  const auto result = register_volumes(fixed, moving, cfg.registration);
  save_control_grid(result.control_grid, cfg.out(files::grid));
  save_vector_volume(dense_field(result.control_grid, fixed.geometry()), cfg.out(files::dense_field));
  save_history_csv(result.objective_history, cfg.out(files::history));
  const Volume3 registered = warp_with_grid(moving, result.control_grid);
  save_volume(registered, cfg.out(files::registered));
  std::string iters;
  for (int i : result.iterations_used) iters += " " + std::to_string(i);
  log("register", "iterations per level (fine to coarse):" + iters + (result.converged ? ", converged" : "") +
                      "; mean |F - M| " + std::to_string(mean_abs_intensity_difference(fixed, moving)) +
                      " -> " + std::to_string(mean_abs_intensity_difference(fixed, registered)) + " in " +
                      std::to_string(sw.seconds()) + " s");
}

void cmd_surface(const PipelineConfig& cfg) {
  require_input(cfg.mask, "input.mask");
  prepare_output(cfg);
  Stopwatch sw;
  const Volume3 mask = load_volume(cfg.mask);
  PointCloud cloud = cfg.outer_only ? extract_outer_wall_points(mask, cfg.iso, cfg.slice_axis)
                                    : extract_wall_points(mask, cfg.iso);
  cloud = estimate_normals(cloud, cfg.normal_k);
  cloud = orient_normals(cloud, cfg.curvature.reference_axis);
  cloud = radius_of_curvature_field(cloud, cfg.curvature);
  save_point_cloud(cloud, cfg.out(files::surface));
  log("surface", std::to_string(cloud.size()) + " points, " + std::to_string(cloud.valid_count()) +
                     " valid, in " + std::to_string(sw.seconds()) + " s");
}

void cmd_kinematics(const PipelineConfig& cfg) {
  require_input(cfg.surface, "input.surface");
  const bool dense = cfg.field_source == "dense";
  const fs::path field_path = dense ? cfg.out(files::dense_field) : cfg.grid;
  require_input(field_path, dense ? "kinematics.field" : "input.grid");
  prepare_output(cfg);
  PointCloud cloud = load_point_cloud(cfg.surface);
  WallKinematics kin;
  if (dense) {
    const VectorVolume3 field = load_vector_volume(field_path);
    if (cfg.crop) cloud = crop_cloud(cloud, field.geometry, *cfg.crop);
    kin = compute_wall_kinematics(cloud, field, cfg.kinematics_options);
  } else {
    const ControlGrid grid = load_control_grid(field_path);
    if (cfg.crop) cloud = crop_cloud(cloud, grid.anchor(), *cfg.crop);
    kin = compute_wall_kinematics(cloud, grid, cfg.kinematics_options);
  }
  const KinematicsSummary summary = summarize(kin, cfg.kinematics_options);
  const PointCloud out = to_point_cloud(kin);
  save_ply(out, cfg.out(files::kinematics_ply));
  save_csv(out, cfg.out(files::kinematics_csv));
  save_summary_json(summary, cfg.out(files::summary));
  log("kinematics", "U_o " + std::to_string(summary.U_o) + " mm, u_o " + std::to_string(summary.u_o) +
                        " mm, eps_o " + std::to_string(summary.eps_o));
}

void cmd_verify(const PipelineConfig& cfg) {
  require_input(cfg.kinematics, "input.kinematics");
  if (!cfg.truth_kinematics) require_input(cfg.truth, "input.truth");
  prepare_output(cfg);
  const WallKinematics estimate = from_point_cloud(load_ply(cfg.kinematics));
  WallKinematics truth;
  if (cfg.truth_kinematics) {
    require_input(*cfg.truth_kinematics, "input.truth_kinematics");
    truth = from_point_cloud(load_ply(*cfg.truth_kinematics));
  } else {
    const AnalyticField field = load_field(cfg.truth);
    PointCloud cloud;
    cloud.points = estimate.points;
    cloud.normals = estimate.normals;
    cloud.radius = estimate.radius;
    cloud.valid = estimate.valid;
    // Physical diastole-to-systole motion of the material point at each wall
    // point, whichever frame the points were taken from.
    DisplacementFn fn;
    if (cfg.fixed_phase == FixedPhase::diastole) {
      fn = [&](const Vec3& p) { return eval_field(field, p); };
    } else {
      fn = [&](const Vec3& p) { return Vec3(-invert_field(field, p, 1e-9, 200)); };
    }
    truth = compute_wall_kinematics(cloud, fn);
    save_ply(to_point_cloud(truth), cfg.out(files::truth_kinematics));
    save_summary_json(summarize(truth, cfg.kinematics_options), cfg.out(files::truth_summary));
  }
  VerificationReport report = build_report(truth, estimate, cfg.report);
  if (fs::exists(cfg.fixed) && fs::exists(cfg.out(files::registered))) {
    report.mean_abs_intensity_difference =
        mean_abs_intensity_difference(load_volume(cfg.fixed), load_volume(cfg.out(files::registered)));
  }
  save_report_json(report, cfg.out(files::report));
  save_report_csv(report, cfg.output);
  save_plot_script(cfg.out(files::plot_script));
  const auto& n = report.channel("normal");
  log("verify", "normal R^2 " + (n.r_squared ? std::to_string(*n.r_squared) : std::string("undefined")) +
                    ", NRMSE " + (n.nrmse ? std::to_string(*n.nrmse) : std::string("undefined")) +
                    ", strain p99 relative difference " +
                    std::to_string(report.strain_p99_relative_difference));
}

ThresholdCheck check_thresholds(const PipelineConfig& cfg) {
  require_input(cfg.out(files::report), "report");
  std::ifstream in(cfg.out(files::report));
  const auto j = nlohmann::json::parse(in);
  ThresholdCheck check;
  auto metric = [&](const char* ch, const char* key) -> std::optional<double> {
    const auto& v = j.at("channels").at(ch).at(key);
    if (!v.is_number()) return std::nullopt;
    return v.get<double>();
  };
  const auto r2 = metric("normal", "r_squared");
  const auto nr = metric("normal", "nrmse");
  const double rel = j.at("strain_p99").at("relative_difference").get<double>();
  const auto& t = cfg.thresholds;
  if (!r2 || *r2 < t.normal_r2_min) check.failures.push_back("normal R^2 below thresholds.normal_r2_min");
  if (!nr || *nr > t.normal_nrmse_max) check.failures.push_back("normal NRMSE above thresholds.normal_nrmse_max");
  if (!(rel <= t.strain_p99_rel_max)) {
    check.failures.push_back("strain p99 relative difference above thresholds.strain_p99_rel_max");
  }
  check.passed = check.failures.empty();
  nlohmann::ordered_json out;
  out["passed"] = check.passed;
  out["normal_r_squared"] = r2 ? nlohmann::ordered_json(*r2) : nlohmann::ordered_json("undefined");
  out["normal_r_squared_min"] = t.normal_r2_min;
  out["normal_nrmse"] = nr ? nlohmann::ordered_json(*nr) : nlohmann::ordered_json("undefined");
  out["normal_nrmse_max"] = t.normal_nrmse_max;
  out["strain_p99_relative_difference"] = rel;
  out["strain_p99_relative_difference_max"] = t.strain_p99_rel_max;
  out["failures"] = check.failures;
  std::ofstream f(cfg.out(files::thresholds));
  if (!f) throw_io("cannot write " + cfg.out(files::thresholds).string());
  f << out.dump(2) << '\n';
  return check;
}

ThresholdCheck cmd_pipeline(const PipelineConfig& cfg) {
  prepare_output(cfg);
  auto stage = [&](const char* name, std::initializer_list<const char*> outputs, auto&& fn) {
    if (cfg.resume && outputs_exist(cfg, outputs)) {
      log(name, "outputs present, skipped (--resume)");
      return;
    }
    fn(cfg);
  };
  stage("synth", {files::diastole, files::systole, files::wall_mask, files::truth_field}, cmd_synth);
  stage("register", {files::grid, files::dense_field, files::history, files::registered}, cmd_register);
  stage("surface", {files::surface}, cmd_surface);
  stage("kinematics", {files::kinematics_ply, files::kinematics_csv, files::summary}, cmd_kinematics);
  stage("verify", {files::report}, cmd_verify);
  return check_thresholds(cfg);
}

int run(int argc, char** argv) {
  CLI::App app{"wallkin: vessel-wall kinematics from a pair of 3D image frames"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string output = "wallkin_out";
  std::optional<int> seed;
  bool resume = false;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Run configuration (key = value, [section] headers)")
      ->check(CLI::ExistingFile);
  app.add_option("--output", output, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Seed for phantom noise and curvature sampling");
  app.add_flag("--resume", resume, "Skip stages whose outputs already exist (pipeline)");
  app.add_option("--set", overrides, "Override one config key, key=value (repeatable)");

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"synth", "Generate the phantom pair and its analytic truth field"},
      {"register", "Register the moving frame onto the fixed frame"},
      {"surface", "Extract wall points, normals and radius of curvature"},
      {"kinematics", "Wall displacement, strain and summary statistics"},
      {"verify", "Compare registration kinematics with the analytic truth"},
      {"pipeline", "Run every stage and check the acceptance thresholds"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ExitCode::ok : ExitCode::validation;
  }

  try {
    KeyValues kv = config_path.empty() ? KeyValues{} : KeyValues::parse_file(config_path);
    for (const auto& o : overrides) kv.apply_override(o);
    if (seed) kv.set("seed", std::to_string(*seed));
    const PipelineConfig cfg = resolve_config(kv, output, resume);
    const std::string name = app.get_subcommands().front()->get_name();
    prepare_output(cfg);
    {
      std::ofstream f(cfg.out(files::config_used));
      f << "# resolved configuration of the last wallkin run in this directory\n"
        << effective_config(cfg).to_string();
    }
    if (name == "synth") cmd_synth(cfg);
    else if (name == "register") cmd_register(cfg);
    else if (name == "surface") cmd_surface(cfg);
    else if (name == "kinematics") cmd_kinematics(cfg);
    else if (name == "verify") cmd_verify(cfg);
    else {
      const auto check = cmd_pipeline(cfg);
      if (!check.passed) {
        for (const auto& f : check.failures) std::cerr << "threshold failed: " << f << '\n';
        return ExitCode::threshold;
      }
      std::cerr << "all thresholds passed\n";
    }
    return ExitCode::ok;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCode::runtime;
  }
}

}  // namespace wallkin::cli
