/**
 * @file nifti.hpp
 * @brief Minimal NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
 *
 * Volumes are written as FLOAT64 so a save/load cycle is bit-exact; masks are
 * written as UINT8 0/1. Loading accepts the common integer and float types and
 * applies scl_slope / scl_inter when present.
 */
#pragma once

#include <filesystem>

#include "segae/volume.hpp"

namespace segae::nifti {

Volume3D load_volume(const std::filesystem::path& path);
void save_volume(const Volume3D& vol, const std::filesystem::path& path);

/// Nonzero voxels become true.
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

/// Loads t1/t2/flair and checks the three share one grid.
MultiChannelVolume load_channels(const std::filesystem::path& t1, const std::filesystem::path& t2,
                                 const std::filesystem::path& flair);

/// Loads a mask and requires it to match `reference`'s grid.
BinaryMask load_mask_like(const std::filesystem::path& path, const Dims3& dims,
                          const Spacing3& spacing);

}  // namespace segae::nifti
