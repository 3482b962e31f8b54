#include "segae/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace segae {

std::string to_string(const Dims3& d) {
  return "(" + std::to_string(d.x) + "," + std::to_string(d.y) + "," + std::to_string(d.z) + ")";
}

namespace {

void validate_grid(const Dims3& dims, const Spacing3& spacing) {
  if (dims.x <= 0 || dims.y <= 0 || dims.z <= 0)
    throw DimensionError("volume dims must be positive, got " + to_string(dims));
  if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
    throw DimensionError("voxel spacing must be strictly positive");
}

}  // namespace

Volume3D::Volume3D(Dims3 dims, Spacing3 spacing, double fill)
    : dims_(dims), spacing_(spacing) {
  validate_grid(dims, spacing);
  data_.assign(dims.voxel_count(), fill);
}

Volume3D::Volume3D(Dims3 dims, Spacing3 spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  validate_grid(dims, spacing);
  if (data_.size() != dims.voxel_count())
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match dims " + to_string(dims));
}

void Volume3D::check_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) throw FormatError("volume contains non-finite values");
}

BinaryMask::BinaryMask(Dims3 dims, Spacing3 spacing, bool fill)
    : dims_(dims), spacing_(spacing) {
  validate_grid(dims, spacing);
  data_.assign(dims.voxel_count(), fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

MultiChannelVolume::MultiChannelVolume(std::vector<Channel> channels)
    : channels_(std::move(channels)) {
  if (channels_.empty()) throw DimensionError("multi-channel volume needs at least one channel");
  std::set<std::string> names;
  for (const auto& c : channels_) {
    if (!names.insert(c.name).second) throw DimensionError("duplicate channel name '" + c.name + "'");
    require_same_grid(c.volume.dims(), c.volume.spacing(), channels_.front().volume.dims(),
                      channels_.front().volume.spacing(), "channel " + c.name);
  }
}

MultiChannelVolume::MultiChannelVolume(Volume3D t1, Volume3D t2, Volume3D flair)
    : MultiChannelVolume(std::vector<Channel>{{std::string(kChannelNames[0]), std::move(t1)},
                                              {std::string(kChannelNames[1]), std::move(t2)},
                                              {std::string(kChannelNames[2]), std::move(flair)}}) {}

const Dims3& MultiChannelVolume::dims() const {
  if (channels_.empty()) throw DimensionError("empty multi-channel volume");
  return channels_.front().volume.dims();
}

const Spacing3& MultiChannelVolume::spacing() const {
  if (channels_.empty()) throw DimensionError("empty multi-channel volume");
  return channels_.front().volume.spacing();
}

std::size_t MultiChannelVolume::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < channels_.size(); ++i)
    if (channels_[i].name == name) return i;
  throw DimensionError("no channel named '" + std::string(name) + "'");
}

const Volume3D& MultiChannelVolume::channel(std::string_view name) const {
  return channels_[channel_index(name)].volume;
}

Volume3D& MultiChannelVolume::channel(std::string_view name) {
  return channels_[channel_index(name)].volume;
}

void require_same_grid(const Dims3& a, const Spacing3& sa, const Dims3& b, const Spacing3& sb,
                       std::string_view what) {
  if (a != b)
    throw DimensionError(std::string(what) + ": dims " + to_string(a) + " vs " + to_string(b));
  constexpr double tol = 1e-6;
  if (std::abs(sa.x - sb.x) > tol || std::abs(sa.y - sb.y) > tol || std::abs(sa.z - sb.z) > tol)
    throw DimensionError(std::string(what) + ": voxel spacing differs");
}

void require_same_grid(const Volume3D& v, const BinaryMask& m, std::string_view what) {
  require_same_grid(v.dims(), v.spacing(), m.dims(), m.spacing(), what);
}

void require_same_grid(const BinaryMask& a, const BinaryMask& b, std::string_view what) {
  require_same_grid(a.dims(), a.spacing(), b.dims(), b.spacing(), what);
}

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a, b, "mask intersection");
  BinaryMask out(a.dims(), a.spacing());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] && b[i]);
  return out;
}

BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a, b, "mask union");
  BinaryMask out(a.dims(), a.spacing());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(i, a[i] || b[i]);
  return out;
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
  require_same_grid(inner, outer, "subset test");
  for (std::size_t i = 0; i < inner.size(); ++i)
    if (inner[i] && !outer[i]) return false;
  return true;
}

BinaryMask threshold_at_least(const Volume3D& v, double threshold) {
  BinaryMask out(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) out.set(i, v[i] >= threshold);
  return out;
}

}  // namespace segae
