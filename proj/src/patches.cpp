#include "segae/patches.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace segae {

std::vector<int> plan_axis(int extent, int patch, int stride) {
  if (patch <= 0 || extent <= 0) throw DimensionError("patch and volume extents must be positive");
  if (patch > extent)
    throw DimensionError("patch extent " + std::to_string(patch) + " exceeds volume extent " +
                         std::to_string(extent));
  if (stride < 1) throw DimensionError("patch stride must be >= 1");
  const int last = extent - patch;
  std::vector<int> out;
  for (int o = 0; o <= last; o += stride) out.push_back(o);
  if (out.back() != last) out.push_back(last);
  return out;
}

PatchGrid plan_patches(const Dims3& dims, const Dims3& patch_size, const Dims3& stride) {
  PatchGrid grid{patch_size, stride, {}};
  const auto xs = plan_axis(dims.x, patch_size.x, stride.x);
  const auto ys = plan_axis(dims.y, patch_size.y, stride.y);
  const auto zs = plan_axis(dims.z, patch_size.z, stride.z);
  grid.origins.reserve(xs.size() * ys.size() * zs.size());
  for (int x : xs)
    for (int y : ys)
      for (int z : zs) grid.origins.push_back({x, y, z});
  return grid;
}

namespace {

void check_window(const Dims3& dims, const Index3& origin, const Dims3& size) {
  for (int a = 0; a < 3; ++a) {
    if (size[a] <= 0 || origin[a] < 0 || origin[a] + size[a] > dims[a])
      throw DimensionError("patch at origin (" + std::to_string(origin[0]) + "," +
                           std::to_string(origin[1]) + "," + std::to_string(origin[2]) +
                           ") size " + to_string(size) + " exceeds volume " + to_string(dims));
  }
}

}  // namespace

Volume3D extract_patch(const Volume3D& vol, const Index3& origin, const Dims3& patch_size) {
  check_window(vol.dims(), origin, patch_size);
  Volume3D out(patch_size, vol.spacing());
  for (int z = 0; z < patch_size.z; ++z)
    for (int y = 0; y < patch_size.y; ++y) {
      const double* src = &vol.data()[vol.index(origin[0], origin[1] + y, origin[2] + z)];
      std::copy(src, src + patch_size.x, &out.data()[out.index(0, y, z)]);
    }
  return out;
}

MultiChannelVolume extract_patch(const MultiChannelVolume& vol, const Index3& origin,
                                 const Dims3& patch_size) {
  std::vector<MultiChannelVolume::Channel> channels;
  channels.reserve(vol.channel_count());
  for (const auto& c : vol.channels())
    channels.push_back({c.name, extract_patch(c.volume, origin, patch_size)});
  return MultiChannelVolume(std::move(channels));
}

BinaryMask extract_patch(const BinaryMask& mask, const Index3& origin, const Dims3& patch_size) {
  check_window(mask.dims(), origin, patch_size);
  BinaryMask out(patch_size, mask.spacing());
  for (int z = 0; z < patch_size.z; ++z)
    for (int y = 0; y < patch_size.y; ++y)
      for (int x = 0; x < patch_size.x; ++x)
        out.set(x, y, z, mask(origin[0] + x, origin[1] + y, origin[2] + z));
  return out;
}

PatchAccumulator::PatchAccumulator(Dims3 dims, Spacing3 spacing)
    : dims_(dims), spacing_(spacing), sum_(dims.voxel_count(), 0.0),
      count_(dims.voxel_count(), 0) {}

void PatchAccumulator::add(const Index3& origin, const Volume3D& patch) {
  const Dims3& ps = patch.dims();
  check_window(dims_, origin, ps);
  const std::size_t sx = static_cast<std::size_t>(dims_.x);
  const std::size_t sxy = sx * static_cast<std::size_t>(dims_.y);
  for (int z = 0; z < ps.z; ++z)
    for (int y = 0; y < ps.y; ++y) {
      const std::size_t base = static_cast<std::size_t>(origin[0]) +
                               sx * static_cast<std::size_t>(origin[1] + y) +
                               sxy * static_cast<std::size_t>(origin[2] + z);
      const double* src = &patch.data()[patch.index(0, y, z)];
      for (int x = 0; x < ps.x; ++x) {
        sum_[base + x] += src[x];
        ++count_[base + x];
      }
    }
}

Volume3D PatchAccumulator::finish() const {
  std::vector<double> out(sum_.size());
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    if (count_[i] == 0) throw CoverageError("voxel " + std::to_string(i) + " is not covered by any patch");
    out[i] = sum_[i] / static_cast<double>(count_[i]);
  }
  return Volume3D(dims_, spacing_, std::move(out));
}

Volume3D assemble_patches(const std::vector<PlacedPatch>& patches, const Dims3& dims,
                          const Spacing3& spacing) {
  PatchAccumulator acc(dims, spacing);
  for (const auto& p : patches) acc.add(p.origin, p.values);
  return acc.finish();
}

MultiChannelVolume normalize_unit_wm(const MultiChannelVolume& vol, const BinaryMask& wm_mask) {
  require_same_grid(vol.dims(), vol.spacing(), wm_mask.dims(), wm_mask.spacing(), "WM mask");
  const std::size_t n = wm_mask.count();
  if (n == 0) throw NormalizationError("WM mask is empty");
  std::vector<MultiChannelVolume::Channel> channels;
  for (const auto& c : vol.channels()) {
    double sum = 0.0;
    for (std::size_t i = 0; i < c.volume.size(); ++i)
      if (wm_mask[i]) sum += c.volume[i];
    const double mean = sum / static_cast<double>(n);
    if (!(std::abs(mean) > 0.0) || !std::isfinite(mean))
      throw NormalizationError("channel '" + c.name + "' has zero or non-finite WM mean");
    std::vector<double> data(c.volume.data().begin(), c.volume.data().end());
    for (double& v : data) v /= mean;
    channels.push_back({c.name, Volume3D(c.volume.dims(), c.volume.spacing(), std::move(data))});
  }
  return MultiChannelVolume(std::move(channels));
}

}  // namespace segae
