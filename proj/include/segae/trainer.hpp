/**
 * @file trainer.hpp
 * @brief Unsupervised training: masked power-intensity loss, augmentation, Adam.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "segae/model.hpp"
#include "segae/volume.hpp"

namespace segae {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 0.001;
  double beta1 = 0.99;
  double beta2 = 0.99999;
  double adam_eps = 1e-8;
  int batch_size = 1;
  int train_stride = 40;
  int loss_exponent = 3;
  double scale_aug_mean = 1.0;
  double scale_aug_sd = 0.5;
  /// Multiplicative constants are redrawn until they exceed this value.
  double scale_aug_min = 0.05;
  double noise_aug_sd = 0.05;
  /// When true the loss target is multiplied by the FLAIR input constant too.
  /// Off by default: the reconstruction of a fixed conical layer cannot follow
  /// a per-patch scale, so the target stays the normalized FLAIR.
  bool scale_target = false;
  /// Segmentation-layer range warm-up. For the first `rescale_warmup_epochs`
  /// epochs the rescale maximum grows geometrically from `rescale_warmup_start`
  /// to the model's seg_rescale_max; afterwards the model value is used. Off by
  /// default.
  double rescale_warmup_start = 0.0;
  int rescale_warmup_epochs = 0;
  std::uint64_t seed = 0;
  /// Verify weight nonnegativity and the membership simplex after each step.
  bool check_constraints = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Mean over mask voxels of (target^p - recon^p)^2.
double reconstruction_loss(const Volume3D& target, const Volume3D& recon, const BinaryMask& mask,
                           int p);

/// dLoss/dRecon: -2p recon^(p-1) (target^p - recon^p) / |mask| on mask voxels, 0 elsewhere.
Volume3D reconstruction_loss_gradient(const Volume3D& target, const Volume3D& recon,
                                      const BinaryMask& mask, int p);

struct AugmentedPatch {
  MultiChannelVolume input;
  Volume3D target;                 // FLAIR used in the loss
  std::vector<double> scales;      // per-channel multiplicative constants
};

/// Per channel: one constant c ~ N(mean, sd^2), redrawn until c > scale_aug_min,
/// then i.i.d. N(0, noise_sd^2) per voxel.
AugmentedPatch augment(const MultiChannelVolume& patch, const TrainConfig& config,
                       std::mt19937_64& rng);

/// Draws one multiplicative augmentation constant.
double draw_scale(const TrainConfig& config, std::mt19937_64& rng);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  static OptimizerState zeros_for(const ModelParameters& params);
  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

/// Bias-corrected Adam update followed by clamping the mixing weights at zero.
void adam_step(ModelParameters& params, const ModelParameters& grads, OptimizerState& state,
               const TrainConfig& config);

/// Clamp-to-zero projection of the conical weights.
void project_mixing_weights(ModelParameters& params);

struct TrainingSubject {
  std::string id;
  MultiChannelVolume channels;
  BinaryMask brain_mask;
  BinaryMask wm_mask;
};

struct LossRecord {
  int epoch = 0;
  std::size_t patch_index = 0;
  double loss = 0.0;
};

struct StepInfo {
  int epoch;
  std::int64_t step;
  double loss;
  const ModelParameters& params;
  const ForwardTrace& trace;
  const MultiChannelVolume& input;
  const Volume3D& target;
  const BinaryMask& mask;
};

struct TrainOptions {
  /// Resume point; when set, training continues with these parameters and
  /// optimizer state from epoch `start_epoch`.
  std::optional<ModelParameters> initial_params;
  std::optional<OptimizerState> initial_state;
  int start_epoch = 0;
  std::function<void(const StepInfo&)> on_step;
  /// Called after every completed epoch (0-based index).
  std::function<void(int epoch, const ModelParameters&, const OptimizerState&,
                     const std::vector<LossRecord>&)>
      on_epoch;
};

struct TrainResult {
  ModelParameters params;
  OptimizerState state;
  std::vector<LossRecord> log;
};

/// Rescale maximum used during `epoch` (the model value once warm-up is over).
double rescale_max_for_epoch(const TrainConfig& config, double model_max, int epoch);

/// Mean loss per epoch, in epoch order.
std::vector<double> epoch_means(const std::vector<LossRecord>& log);

TrainResult train(const std::vector<TrainingSubject>& cohort, const ModelConfig& model_config,
                  const TrainConfig& train_config, const TrainOptions& options = {});

}  // namespace segae
