#pragma once

#include <filesystem>

#include "wallkin/volume.hpp"

namespace wallkin {

/// Loads a volume. `.nii` selects NIfTI-1; anything else is read as a sidecar
/// text header (key = value lines: dims, spacing_mm, origin_mm, data_file)
/// pointing at raw little-endian float32 data.
Volume3 load_volume(const std::filesystem::path& path);

/// Saves a volume; `.nii` writes NIfTI-1 float32, otherwise sidecar + `.raw`.
void save_volume(const Volume3& v, const std::filesystem::path& path);

/// Three-channel field as sidecar + raw little-endian float64, voxel-interleaved.
void save_vector_volume(const VectorVolume3& v, const std::filesystem::path& path);
VectorVolume3 load_vector_volume(const std::filesystem::path& path);

Volume3 load_nifti(const std::filesystem::path& path);
void save_nifti(const Volume3& v, const std::filesystem::path& path);

}  // namespace wallkin
