/**
 * @file model.hpp
 * @brief The constrained convolutional autoencoder.
 *
 * Encoder: per scale two 3x3x3 convolutions with leaky ReLU, then a 2x
 * downsample, filters doubling per scale. Decoder: nearest-neighbour 2x
 * upsample followed by convolutions halving the filters. A 1x1x1 convolution
 * produces one activation map per class. The segmentation layer rescales each
 * voxel's activation vector to [0, seg_rescale_max] and applies a softmax, and
 * the reconstruction is the nonnegative, bias-free combination of the
 * resulting memberships.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "segae/tensor.hpp"
#include "segae/volume.hpp"

namespace segae {

enum class Downsample { kStridedConv, kAvgPool };

struct ModelConfig {
  int in_channels = 3;
  int n_classes = 5;
  int n_scales = 3;
  int base_filters = 32;
  int kernel_size = 3;
  double lrelu_slope = 0.1;
  double seg_rescale_max = 200.0;
  double rescale_eps = 1e-7;
  Dims3 patch_size{80, 80, 80};
  Downsample downsample = Downsample::kStridedConv;
  bool skip_connections = false;
  /// Mixing weights start evenly spaced on [1 - spread, 1 + spread] in class
  /// order; 0 starts them all at exactly 1.
  double mixing_init_spread = 0.0;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ModelParameters {
  ModelConfig config;
  std::vector<ConvLayer> convs;
  /// Conical weights of the last 1x1x1 layer; kept >= 0, no bias.
  std::vector<double> mixing_weights;

  std::size_t parameter_count() const noexcept;
  /// Every trainable array in a fixed order (conv weight, conv bias, ..., mixing).
  std::vector<std::span<double>> arrays();
  std::vector<std::span<const double>> arrays() const;
  /// Same architecture with every value zero (used for gradients).
  ModelParameters zeros_like() const;

  friend bool operator==(const ModelParameters&, const ModelParameters&) = default;
};

/// Random He-normal conv weights, zero biases, mixing weights 1.0.
ModelParameters build_model(const ModelConfig& config, std::uint64_t seed);

/// Trainable parameter count predicted from the configuration alone.
std::size_t expected_parameter_count(const ModelConfig& config);

struct ForwardOutput {
  Tensor memberships;           // n_classes maps, simplex per voxel
  Volume3D reconstruction;      // sum_c w_c * membership_c
  Tensor pre_softmax_activations;  // raw output of the last conv, before rescaling
};

/// Per-voxel min-max rescale of the class vector to [0, max_value].
Tensor rescale_activations(const Tensor& activations, double max_value, double eps = 1e-7);
/// Numerically stable softmax over the channel axis.
Tensor softmax_channels(const Tensor& logits);
/// softmax(rescale(activations)).
Tensor segmentation_layer(const Tensor& activations, double max_value = 200.0, double eps = 1e-7);

/// Voxelwise dot product with the nonnegative mixing weights.
Volume3D conical_mix(const Tensor& memberships, std::span<const double> mixing_weights,
                     const Spacing3& spacing = {});

ForwardOutput forward(const ModelParameters& params, const MultiChannelVolume& patch);

/// Intermediate values retained for backpropagation.
struct ForwardTrace {
  std::vector<Tensor> values;  // values[0] = input, values[i + 1] = output of op i
  Tensor rescaled;
  ForwardOutput output;
};

ForwardTrace forward_trace(const ModelParameters& params, const MultiChannelVolume& patch);

/// Gradients of a scalar loss with respect to every parameter, given
/// dLoss/dReconstruction.
ModelParameters backward(const ModelParameters& params, const ForwardTrace& trace,
                         const Volume3D& grad_reconstruction);

/// Gradient of softmax(rescale(a)) composed with upstream membership
/// gradients, with respect to the raw activations a.
Tensor segmentation_layer_backward(const Tensor& activations, const Tensor& memberships,
                                   const Tensor& grad_memberships, double max_value, double eps);

}  // namespace segae
