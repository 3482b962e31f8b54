/**
 * @file patches.hpp
 * @brief Regular patch grids, patch extraction and overlap-averaged assembly.
 */
#pragma once

#include <utility>
#include <vector>

#include "segae/volume.hpp"

namespace segae {

struct PatchGrid {
  Dims3 patch_size{};
  Dims3 stride{};
  /// Corner coordinates, unique and sorted lexicographically by (x, y, z).
  std::vector<Index3> origins;
};

/// Per-axis origins are 0, s, 2s, ... up to D-P, with D-P appended when the
/// stride does not land on it, so every voxel is covered.
PatchGrid plan_patches(const Dims3& dims, const Dims3& patch_size, const Dims3& stride);

/// Axis helper behind plan_patches.
std::vector<int> plan_axis(int extent, int patch, int stride);

Volume3D extract_patch(const Volume3D& vol, const Index3& origin, const Dims3& patch_size);
MultiChannelVolume extract_patch(const MultiChannelVolume& vol, const Index3& origin,
                                 const Dims3& patch_size);
BinaryMask extract_patch(const BinaryMask& mask, const Index3& origin, const Dims3& patch_size);

struct PlacedPatch {
  Index3 origin{};
  Volume3D values;
};

/// Accumulates patch sums and cover counts, dividing only in finish().
/// Visit order therefore does not affect the result.
class PatchAccumulator {
 public:
  PatchAccumulator(Dims3 dims, Spacing3 spacing);

  void add(const Index3& origin, const Volume3D& patch);
  /// Throws CoverageError when a voxel received no patch.
  Volume3D finish() const;

 private:
  Dims3 dims_;
  Spacing3 spacing_;
  std::vector<double> sum_;
  std::vector<std::uint32_t> count_;
};

Volume3D assemble_patches(const std::vector<PlacedPatch>& patches, const Dims3& dims,
                          const Spacing3& spacing = {});

/// Divides every channel by its mean over `wm_mask`.
MultiChannelVolume normalize_unit_wm(const MultiChannelVolume& vol, const BinaryMask& wm_mask);

}  // namespace segae
