#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "wallkin/control_grid.hpp"
#include "wallkin/volume.hpp"

namespace wallkin {

struct RegistrationConfig {
  double lambda = 0.05;               ///< TV weight.
  double lcc_sigma_voxels = 2.0;      ///< Gaussian window of the local means.
  Index3 control_spacing_voxels{6, 6, 6};
  int pyramid_levels = 3;
  int max_iterations = 200;           ///< Per pyramid level.
  double gradient_tolerance = 1e-5;   ///< Relative to the level's initial gradient max-norm; a level also stops once a gradient step lowers the objective by less than 1e-10 relative.
  double tv_epsilon_mm = 1e-3;
  double lcc_epsilon = 1e-6;          ///< Times each image's squared intensity range.
  /// Gaussian applied to both images before the pyramid is built. It evens out
  /// the interpolation smoothing of noise, which otherwise biases the
  /// correlation towards whole-voxel shifts. 0 disables it.
  double presmooth_sigma_voxels = 1.25;
  std::uint64_t rng_seed = 0;         ///< Recorded for provenance; the optimiser is deterministic.

  void validate() const;
};

/// Value and gradient with respect to every control displacement.
struct EnergyGradient {
  double value = 0.0;
  std::vector<Vec3> gradient;
};

struct HistoryEntry {
  int level = 0;  ///< 0 is the finest level.
  int iteration = 0;
  double data_term = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
};

struct RegistrationResult {
  ControlGrid control_grid;  ///< On the finest (input) geometry.
  std::vector<HistoryEntry> objective_history;
  bool converged = false;
  std::vector<int> iterations_used;  ///< Indexed like HistoryEntry::level.
};

/// LCC dissimilarity for a fixed image and a moving image warped by a control grid.
///
/// The fixed-image statistics are computed once at construction. The metric is
/// E = -v * sum_x cc(x) with
///   cc = (<F J> - <F><J>) / sqrt((<F^2> - <F>^2 + eps_F) (<J^2> - <J>^2 + eps_J)),
/// J(x) = M(x + d(x)), <.> a Gaussian window average and each eps scaled by its
/// own image's squared intensity range.
class LccMetric {
 public:
  LccMetric(const Volume3& fixed, const Volume3& moving, const RegistrationConfig& cfg);
  ~LccMetric();
  LccMetric(LccMetric&&) noexcept;
  LccMetric& operator=(LccMetric&&) noexcept;

  EnergyGradient evaluate(const ControlGrid& g) const;
  /// Value only (skips the adjoint pass).
  double value(const ControlGrid& g) const;
  /// Moving image resampled through the grid.
  std::vector<double> warped_moving(const ControlGrid& g) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

EnergyGradient lcc_energy(const Volume3& fixed, const Volume3& moving, const ControlGrid& g,
                          const RegistrationConfig& cfg);

/// Smoothed isotropic TV of the control displacements,
/// eta * sum_m (sqrt(|grad k[m]|^2 + eps^2) - eps), forward differences per mm,
/// zero difference past the last node.
EnergyGradient tv_energy(const ControlGrid& g, double tv_epsilon_mm);

struct ObjectiveValue {
  double data_term = 0.0;
  double regularizer = 0.0;
  double total = 0.0;
  std::vector<Vec3> gradient;
};

ObjectiveValue objective(const Volume3& fixed, const Volume3& moving, const ControlGrid& g,
                         const RegistrationConfig& cfg);

/// Coarse-to-fine L-BFGS minimisation of LCC + lambda * TV, after the optional
/// presmoothing.
RegistrationResult register_volumes(const Volume3& fixed, const Volume3& moving,
                                    const RegistrationConfig& cfg);

/// The moving image resampled at x + d(x) on the grid's anchor geometry.
Volume3 warp_with_grid(const Volume3& moving, const ControlGrid& g);

/// CSV with columns level,iteration,E_D,E_R,total.
void save_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path);

}  // namespace wallkin
