#pragma once

#include "wallkin/point_cloud.hpp"
#include "wallkin/volume.hpp"

namespace wallkin {

/// Centres of voxels above `iso` that have at least one in-volume face
/// neighbour below it. Throws ValidationError when the set is empty.
PointCloud extract_wall_points(const Volume3& mask, double iso);

/// Same, after filling the enclosed background of every slice perpendicular to
/// `slice_axis` (0, 1 or 2). For a tube running along that axis only the
/// external surface survives.
PointCloud extract_outer_wall_points(const Volume3& mask, double iso, int slice_axis);

/// PCA plane fit over the k nearest neighbours (the point itself included).
/// The normal is the eigenvector of the smallest covariance eigenvalue; its
/// sign is arbitrary. Neighbourhoods whose two smallest eigenvalues coincide
/// (within 1e-12 of the largest) are marked invalid.
PointCloud estimate_normals(const PointCloud& cloud, int k);

/// Flips normals to point away from the local axis: the centroid of the points
/// within +-3 mm along `reference_axis` (or the global centroid when that slab
/// has fewer than 4 points).
PointCloud orient_normals(const PointCloud& cloud, const Vec3& reference_axis);

}  // namespace wallkin
