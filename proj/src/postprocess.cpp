#include "segae/postprocess.hpp"

#include <string>
#include <vector>

namespace segae {

StructuringElement::StructuringElement(int ex, int ey, int ez) {
  const std::array<int, 3> ext{ex, ey, ez};
  for (int a = 0; a < 3; ++a) {
    if (ext[a] <= 0 || ext[a] % 2 == 0)
      throw ConfigError("structuring element extents must be odd and positive");
    radius_[a] = ext[a] / 2;
  }
}

namespace {

// One pass of a 1D running-minimum along `axis`. A box erosion is separable:
// the three axis passes together test the whole box.
void erode_axis(std::vector<std::uint8_t>& data, const Dims3& dims, int axis, int radius) {
  if (radius == 0) return;
  const std::size_t nx = static_cast<std::size_t>(dims.x);
  const std::size_t nxy = nx * static_cast<std::size_t>(dims.y);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? nx : nxy);
  const int len = dims[axis];
  const int o1 = axis == 0 ? 1 : 0;  // the two other axes
  const int o2 = axis == 2 ? 1 : 2;
  std::vector<std::uint8_t> line(static_cast<std::size_t>(len));
  // prefix counts of zeros along the line
  std::vector<int> zeros(static_cast<std::size_t>(len) + 1);
  for (int b = 0; b < dims[o2]; ++b)
    for (int a = 0; a < dims[o1]; ++a) {
      std::array<std::size_t, 3> start{0, 0, 0};
      start[o1] = static_cast<std::size_t>(a);
      start[o2] = static_cast<std::size_t>(b);
      const std::size_t base = start[0] + nx * start[1] + nxy * start[2];
      for (int i = 0; i < len; ++i) line[i] = data[base + stride * i];
      zeros[0] = 0;
      for (int i = 0; i < len; ++i) zeros[i + 1] = zeros[i] + (line[i] ? 0 : 1);
      for (int i = 0; i < len; ++i) {
        const int lo = i - radius;
        const int hi = i + radius;
        bool keep = line[i] != 0 && lo >= 0 && hi < len;
        if (keep) keep = zeros[hi + 1] - zeros[lo] == 0;
        data[base + stride * i] = keep ? 1 : 0;
      }
    }
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se, int iterations) {
  if (iterations < 0) throw ConfigError("erosion iterations must be >= 0");
  std::vector<std::uint8_t> data(mask.data().begin(), mask.data().end());
  for (int it = 0; it < iterations; ++it)
    for (int axis = 0; axis < 3; ++axis) erode_axis(data, mask.dims(), axis, se.radius(axis));
  BinaryMask out(mask.dims(), mask.spacing());
  for (std::size_t i = 0; i < data.size(); ++i) out.set(i, data[i] != 0);
  return out;
}

BinaryMask apply_postprocess(const BinaryMask& lesion, const BinaryMask& skullstrip_mask,
                             const BinaryMask& tissue_mask, const PostprocessConfig& config) {
  require_same_grid(lesion, skullstrip_mask, "skull-strip mask");
  require_same_grid(lesion, tissue_mask, "tissue mask");
  const auto cube = StructuringElement::cube3();
  return lesion & erode(skullstrip_mask, cube, config.skullstrip_iterations) &
         erode(tissue_mask, cube, config.tissue_iterations);
}

}  // namespace segae
