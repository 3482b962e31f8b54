/**
 * @file inference.hpp
 * @brief Sliding-window prediction, lesion-channel selection and binarization.
 */
#pragma once

#include <optional>
#include <vector>

#include "json.hpp"

#include "segae/model.hpp"
#include "segae/volume.hpp"

namespace segae {

struct InferenceConfig {
  int predict_stride = 20;
  double threshold = 0.5;
  std::optional<int> lesion_channel_override;

  void validate() const;
};

void to_json(nlohmann::json& j, const InferenceConfig& c);
void from_json(const nlohmann::json& j, InferenceConfig& c);

struct ChannelSelection {
  int channel = 0;
  bool tie = false;  // several weights shared the maximum; lowest index chosen
};

/// Override when given, otherwise the class with the largest conical weight.
ChannelSelection select_lesion_channel(const ModelParameters& params,
                                       std::optional<int> override_channel = std::nullopt);

/// Overlap-averaged class memberships for a whole volume (WM-normalized
/// first, zero outside the brain mask). One map per class.
std::vector<Volume3D> predict_memberships(const ModelParameters& params,
                                          const MultiChannelVolume& vol, const BinaryMask& wm_mask,
                                          const BinaryMask& brain_mask,
                                          const InferenceConfig& config = {});

/// Voxel true iff prob >= threshold.
BinaryMask binarize(const Volume3D& prob, double threshold = 0.5);

}  // namespace segae
