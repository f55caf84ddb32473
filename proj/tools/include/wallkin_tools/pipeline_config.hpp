#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "wallkin/config.hpp"
#include "wallkin/cylinder.hpp"
#include "wallkin/kinematics.hpp"
#include "wallkin/registration.hpp"
#include "wallkin/synthetic.hpp"
#include "wallkin/verification.hpp"

namespace wallkin::cli {

/// Which acquisition was used as the fixed (reference) image. The dense field
/// lives on that frame, so it also fixes the kinematics sign.
enum class FixedPhase { diastole, systole };

struct CropWindow {
  Index3 lo{0, 0, 0};
  Index3 hi{0, 0, 0};  ///< Exclusive.
};

struct Thresholds {
  double normal_r2_min = 0.95;
  double normal_nrmse_max = 0.05;
  double strain_p99_rel_max = 0.10;
};

/// Every key a run understands, resolved against defaults. Paths are absolute
/// or relative to the working directory; stage inputs default to files in the
/// output directory.
struct PipelineConfig {
  KeyValues raw;
  std::filesystem::path output;
  bool resume = false;
  std::uint64_t seed = 0;

  PhantomSpec phantom;
  AnalyticField field;

  std::filesystem::path fixed, moving, mask, grid, surface, kinematics, truth;
  std::optional<std::filesystem::path> truth_kinematics;
  FixedPhase fixed_phase = FixedPhase::diastole;

  RegistrationConfig registration;

  double iso = 0.5;
  bool outer_only = true;
  int slice_axis = 2;
  int normal_k = 30;
  CurvatureParams curvature;

  KinematicsOptions kinematics_options;
  std::string field_source = "grid";  ///< grid or dense
  std::optional<CropWindow> crop;

  ReportOptions report;
  Thresholds thresholds;

  std::filesystem::path out(const std::string& name) const { return output / name; }
};

/// Builds a PipelineConfig from parsed keys. Throws ValidationError with the
/// key name on any bad value.
PipelineConfig resolve_config(const KeyValues& kv, const std::filesystem::path& output, bool resume);

/// The full key schema with defaults, as written to config_used.cfg.
KeyValues effective_config(const PipelineConfig& cfg);

}  // namespace wallkin::cli
