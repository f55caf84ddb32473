#include "wallkin/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wallkin/error.hpp"
#include "wallkin/filters.hpp"

namespace wallkin {

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) {
      throw_validation("volume dims must be >= 2 on every axis (axis " + std::to_string(a) +
                       " has " + std::to_string(dims[a]) + ")");
    }
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw_validation("volume spacing must be positive on every axis");
    }
    if (!std::isfinite(origin[a])) throw_validation("volume origin must be finite");
  }
}

bool Geometry::matches(const Geometry& other, double tol) const {
  return dims == other.dims && (spacing - other.spacing).cwiseAbs().maxCoeff() <= tol &&
         (origin - other.origin).cwiseAbs().maxCoeff() <= tol;
}

Volume3::Volume3(const Geometry& geom, float fill) : geom_(geom) {
  geom_.validate();
  data_.assign(geom_.voxel_count(), fill);
}

Volume3::Volume3(const Geometry& geom, std::vector<float> data)
    : geom_(geom), data_(std::move(data)) {
  geom_.validate();
  if (data_.size() != geom_.voxel_count()) {
    throw_validation("volume data length " + std::to_string(data_.size()) +
                     " does not match dims product " + std::to_string(geom_.voxel_count()));
  }
}

std::vector<double> Volume3::to_double() const { return {data_.begin(), data_.end()}; }

float Volume3::min_value() const { return *std::min_element(data_.begin(), data_.end()); }
float Volume3::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

VectorVolume3::VectorVolume3(const Geometry& geom) : geometry(geom) {
  geometry.validate();
  for (auto& c : channels) c.assign(geometry.voxel_count(), 0.0);
}

Vec3 VectorVolume3::sample(const Vec3& p) const {
  const Vec3 idx = geometry.to_index(p);
  return {sample_trilinear(channels[0], geometry.dims, idx),
          sample_trilinear(channels[1], geometry.dims, idx),
          sample_trilinear(channels[2], geometry.dims, idx)};
}

}  // namespace wallkin
