#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wallkin/volume.hpp"

namespace wallkin {

/// Wall points in millimetres with optional per-point normals, radius of
/// curvature and named scalar channels. `valid` always has one flag per point.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;   ///< Empty, or unit vectors, one per point.
  std::vector<double> radius;  ///< Empty, or one value per point (mm).
  std::vector<std::uint8_t> valid;
  std::vector<std::pair<std::string, std::vector<double>>> attributes;

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_radius() const { return !radius.empty(); }
  std::size_t valid_count() const;

  void add_point(const Vec3& p) {
    points.push_back(p);
    valid.push_back(1);
  }

  /// Adds or replaces a named channel.
  void set_attribute(const std::string& name, std::vector<double> values);
  const std::vector<double>* find_attribute(const std::string& name) const;

  /// Throws ValidationError when channel lengths disagree or normals are not unit.
  void validate() const;
};

/// ASCII PLY: x y z [nx ny nz] [radius] valid [attributes...], doubles written
/// with 17 significant digits so a reload is exact.
void save_ply(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_ply(const std::filesystem::path& path);

/// CSV with a header row using the same column names as the PLY properties.
void save_csv(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_csv(const std::filesystem::path& path);

/// Dispatches on extension (.ply or .csv).
void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_point_cloud(const std::filesystem::path& path);

}  // namespace wallkin
