/**
 * @file phantom.hpp
 * @brief Synthetic T1/T2/FLAIR volumes built as known mixtures of tissue maps.
 *
 * Geometry is ellipsoidal: a brain ellipsoid with a cortical shell (GM), two
 * central ventricles (CSF), white matter filling the rest, and lesion blobs
 * inside the white matter. Memberships ramp linearly across boundaries so
 * partial-volume voxels exist. Every channel is the membership-weighted sum
 * of the per-tissue intensity rows, times a smooth bias field, plus noise.
 */
#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "json.hpp"

#include "segae/volume.hpp"

namespace segae {

/// Tissue class order of memberships and of intensity table rows.
enum class Tissue : int { kWhiteMatter = 0, kGrayMatter = 1, kCsf = 2, kLesion = 3, kBackground = 4 };
inline constexpr int kTissueCount = 5;
inline constexpr std::array<const char*, kTissueCount> kTissueNames{"wm", "gm", "csf", "lesion",
                                                                    "background"};

using IntensityRow = std::array<double, 3>;  // t1, t2, flair

struct PhantomSpec {
  Dims3 dims{96, 96, 96};
  Spacing3 spacing{0.8, 0.8, 0.8};
  int n_tissues = kTissueCount;
  std::pair<int, int> lesion_count_range{1, 10};
  std::pair<double, double> lesion_radius_range{2.0, 6.0};
  std::vector<IntensityRow> intensity_table{
      {1.00, 0.55, 0.80},  // wm
      {0.70, 0.80, 0.95},  // gm
      {0.30, 1.80, 0.25},  // csf
      {0.75, 1.30, 1.50},  // lesion
      {0.00, 0.00, 0.00},  // background
  };
  double bias_field_amplitude = 0.05;
  double noise_sigma = 0.02;
  /// Width of the linear membership ramp in voxels; 0 gives hard indicator maps.
  double boundary_ramp = 1.5;
  /// Number of hyperintense FLAIR blobs injected in the cortical rim. They are
  /// not lesions and are reported separately in PhantomTruth::rim_artifact_mask.
  int rim_artifact_count = 0;
  /// Outer rim removed from the brain to form the tissue mask ("sulcal CSF").
  double sulcal_rim_width = 1.5;
  /// Minimum depth of any lesion voxel below the brain surface, in voxels.
  double lesion_min_depth = 14.0;
  std::uint64_t seed = 1;

  /// Throws ConfigError on an invalid spec.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& s);
void from_json(const nlohmann::json& j, PhantomSpec& s);

struct PhantomTruth {
  std::vector<Volume3D> memberships;  // kTissueCount maps, summing to 1 per voxel
  BinaryMask lesion_mask;             // lesion membership >= 0.5
  BinaryMask wm_mask;
  BinaryMask brain_mask;
  BinaryMask tissue_mask;             // brain without the outer sulcal rim
  BinaryMask rim_artifact_mask;       // injected artifacts (empty by default)
  std::vector<IntensityRow> mixing_weights;
  int lesion_count = 0;
};

struct Phantom {
  MultiChannelVolume channels;
  PhantomTruth truth;
};

Phantom generate_phantom(const PhantomSpec& spec);

/// Seed of subject `index` in a cohort seeded with `cohort_seed`.
std::uint64_t subject_seed(std::uint64_t cohort_seed, std::size_t index);

/// Subject `index` of the cohort, generated on its own.
Phantom generate_subject(const PhantomSpec& spec, std::uint64_t cohort_seed, std::size_t index);

std::vector<Phantom> generate_cohort(const PhantomSpec& spec, std::size_t n_subjects,
                                     std::uint64_t seed);

}  // namespace segae
