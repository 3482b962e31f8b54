#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "segae/volume.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_bytes(const std::filesystem::path& p);
void write_bytes(const std::filesystem::path& p, const std::string& bytes);

segae::BinaryMask random_mask(const segae::Dims3& dims, std::mt19937_64& rng, double p,
                              const segae::Spacing3& spacing = {});
segae::Volume3D random_volume(const segae::Dims3& dims, std::mt19937_64& rng, double lo = 0.0,
                              double hi = 1.0);
/// Three positive channels named t1, t2, flair.
segae::MultiChannelVolume random_channels(const segae::Dims3& dims, std::mt19937_64& rng);

}  // namespace testutil
