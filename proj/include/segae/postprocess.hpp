/**
 * @file postprocess.hpp
 * @brief Binary erosion and the eroded-brain-mask cleanup of lesion masks.
 */
#pragma once

#include <array>

#include "segae/volume.hpp"

namespace segae {

/// Centered box structuring element with odd extents. The default is the
/// full 3x3x3 cube.
class StructuringElement {
 public:
  StructuringElement() = default;
  /// Each extent must be odd and positive.
  StructuringElement(int ex, int ey, int ez);

  static StructuringElement cube3() { return {}; }

  int radius(int axis) const noexcept { return radius_[axis]; }

 private:
  std::array<int, 3> radius_{1, 1, 1};
};

/// Iterated binary erosion. Voxels outside the volume count as background, so
/// masks also shrink away from the field-of-view border. Zero iterations is
/// the identity.
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se = {}, int iterations = 1);

struct PostprocessConfig {
  int skullstrip_iterations = 10;
  int tissue_iterations = 2;
};

/// lesion AND erode(skullstrip, cube, 10) AND erode(tissue, cube, 2).
BinaryMask apply_postprocess(const BinaryMask& lesion, const BinaryMask& skullstrip_mask,
                             const BinaryMask& tissue_mask, const PostprocessConfig& config = {});

}  // namespace segae
