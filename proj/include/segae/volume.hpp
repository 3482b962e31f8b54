/**
 * @file volume.hpp
 * @brief Dense 3D scalar grids, multi-channel stacks and binary masks.
 *
 * Storage is x-fastest (NIfTI order): index = x + nx * (y + ny * z).
 */
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segae/errors.hpp"

namespace segae {

/// Voxel extents along x, y, z.
struct Dims3 {
  int x = 0;
  int y = 0;
  int z = 0;

  constexpr std::size_t voxel_count() const noexcept {
    return static_cast<std::size_t>(x) * static_cast<std::size_t>(y) *
           static_cast<std::size_t>(z);
  }
  constexpr int operator[](int axis) const noexcept {
    return axis == 0 ? x : (axis == 1 ? y : z);
  }
  constexpr int& operator[](int axis) noexcept {
    return axis == 0 ? x : (axis == 1 ? y : z);
  }
  friend constexpr bool operator==(const Dims3&, const Dims3&) = default;
};

/// Integer voxel coordinate (patch origins, offsets).
using Index3 = std::array<int, 3>;

/// Voxel size in millimetres.
struct Spacing3 {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double voxel_volume_mm3() const noexcept { return x * y * z; }
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

std::string to_string(const Dims3& d);

class Volume3D {
 public:
  Volume3D() = default;
  Volume3D(Dims3 dims, Spacing3 spacing, double fill = 0.0);
  Volume3D(Dims3 dims, Spacing3 spacing, std::vector<double> data);

  const Dims3& dims() const noexcept { return dims_; }
  const Spacing3& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(int x, int y, int z) const noexcept {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }
  double& operator()(int x, int y, int z) noexcept { return data_[index(x, y, z)]; }
  double operator()(int x, int y, int z) const noexcept { return data_[index(x, y, z)]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  /// Throws FormatError when any voxel is NaN or infinite.
  void check_finite() const;

  friend bool operator==(const Volume3D&, const Volume3D&) = default;

 private:
  Dims3 dims_{};
  Spacing3 spacing_{};
  std::vector<double> data_;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(Dims3 dims, Spacing3 spacing, bool fill = false);

  const Dims3& dims() const noexcept { return dims_; }
  const Spacing3& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(int x, int y, int z) const noexcept {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_.x) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
  }
  bool operator()(int x, int y, int z) const noexcept { return data_[index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool v) noexcept { data_[index(x, y, z)] = v ? 1 : 0; }
  bool operator[](std::size_t i) const noexcept { return data_[i] != 0; }
  void set(std::size_t i, bool v) noexcept { data_[i] = v ? 1 : 0; }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Dims3 dims_{};
  Spacing3 spacing_{};
  std::vector<std::uint8_t> data_;
};

/// Channel order used everywhere in the pipeline.
inline constexpr std::array<std::string_view, 3> kChannelNames{"t1", "t2", "flair"};

/// Ordered stack of named volumes sharing dims and spacing.
class MultiChannelVolume {
 public:
  struct Channel {
    std::string name;
    Volume3D volume;
    friend bool operator==(const Channel&, const Channel&) = default;
  };

  MultiChannelVolume() = default;
  explicit MultiChannelVolume(std::vector<Channel> channels);
  /// Convenience constructor for the standard (t1, t2, flair) triple.
  MultiChannelVolume(Volume3D t1, Volume3D t2, Volume3D flair);

  std::size_t channel_count() const noexcept { return channels_.size(); }
  const Dims3& dims() const;
  const Spacing3& spacing() const;

  const Volume3D& channel(std::size_t i) const { return channels_.at(i).volume; }
  Volume3D& channel(std::size_t i) { return channels_.at(i).volume; }
  const Volume3D& channel(std::string_view name) const;
  Volume3D& channel(std::string_view name);
  const std::string& name(std::size_t i) const { return channels_.at(i).name; }
  std::size_t channel_index(std::string_view name) const;

  const std::vector<Channel>& channels() const noexcept { return channels_; }

  friend bool operator==(const MultiChannelVolume&, const MultiChannelVolume&) = default;

 private:
  std::vector<Channel> channels_;
};

/// Throws DimensionError unless dims and spacing agree.
void require_same_grid(const Dims3& a, const Spacing3& sa, const Dims3& b, const Spacing3& sb,
                       std::string_view what);
void require_same_grid(const Volume3D& v, const BinaryMask& m, std::string_view what);
void require_same_grid(const BinaryMask& a, const BinaryMask& b, std::string_view what);

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b);
BinaryMask operator|(const BinaryMask& a, const BinaryMask& b);
/// True when every voxel of `inner` is also set in `outer`.
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

/// Voxelwise threshold: true iff value >= threshold.
BinaryMask threshold_at_least(const Volume3D& v, double threshold);

}  // namespace segae
