#pragma once

#include <string>
#include <vector>

#include "wallkin_tools/pipeline_config.hpp"

namespace wallkin::cli {

/// Output file names inside the run directory.
namespace files {
inline constexpr const char* diastole = "diastole.vol";
inline constexpr const char* systole = "systole.vol";
inline constexpr const char* wall_mask = "wall_mask.vol";
inline constexpr const char* truth_field = "truth_field.cfg";
inline constexpr const char* grid = "grid.cgrid";
inline constexpr const char* dense_field = "dense_field.vol";
inline constexpr const char* history = "history.csv";
inline constexpr const char* registered = "registered.vol";
inline constexpr const char* surface = "surface.ply";
inline constexpr const char* kinematics_ply = "kinematics.ply";
inline constexpr const char* kinematics_csv = "kinematics.csv";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* truth_kinematics = "truth_kinematics.ply";
inline constexpr const char* truth_summary = "truth_summary.json";
inline constexpr const char* report = "report.json";
inline constexpr const char* plot_script = "plot_report.py";
inline constexpr const char* thresholds = "thresholds.json";
inline constexpr const char* config_used = "config_used.cfg";
}  // namespace files

void cmd_synth(const PipelineConfig& cfg);
void cmd_register(const PipelineConfig& cfg);
void cmd_surface(const PipelineConfig& cfg);
void cmd_kinematics(const PipelineConfig& cfg);
void cmd_verify(const PipelineConfig& cfg);

struct ThresholdCheck {
  bool passed = true;
  std::vector<std::string> failures;
};

/// Compares report.json in the output directory against cfg.thresholds and
/// writes thresholds.json.
ThresholdCheck check_thresholds(const PipelineConfig& cfg);

/// synth, register, surface, kinematics and verify in order. With cfg.resume a
/// stage whose outputs already exist is skipped.
ThresholdCheck cmd_pipeline(const PipelineConfig& cfg);

enum ExitCode : int { ok = 0, validation = 1, runtime = 2, threshold = 3 };

/// Full command-line entry point; never throws.
int run(int argc, char** argv);

}  // namespace wallkin::cli
