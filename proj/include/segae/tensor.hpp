/**
 * @file tensor.hpp
 * @brief Channel-major feature maps and the 3D convolution kernels of the network.
 */
#pragma once

#include <span>
#include <vector>

#include "segae/volume.hpp"

namespace segae {

/// Feature map stack, layout [channel][z][y][x].
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, Dims3 dims, double fill = 0.0);

  int channels() const noexcept { return channels_; }
  const Dims3& dims() const noexcept { return dims_; }
  std::size_t channel_size() const noexcept { return dims_.voxel_count(); }
  std::size_t size() const noexcept { return data_.size(); }

  double* channel(int c) noexcept { return data_.data() + static_cast<std::size_t>(c) * channel_size(); }
  const double* channel(int c) const noexcept {
    return data_.data() + static_cast<std::size_t>(c) * channel_size();
  }
  double* row(int c, int z, int y) noexcept {
    return channel(c) + static_cast<std::size_t>(dims_.x) *
                            (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_.y) * z);
  }
  const double* row(int c, int z, int y) const noexcept {
    return channel(c) + static_cast<std::size_t>(dims_.x) *
                            (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_.y) * z);
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  /// this += other (same shape).
  void add(const Tensor& other);

  Volume3D to_volume(int c, const Spacing3& spacing = {}) const;
  static Tensor from_channels(const MultiChannelVolume& vol);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int channels_ = 0;
  Dims3 dims_{};
  std::vector<double> data_;
};

/// Convolution with "same"-style zero padding (kernel / 2) and stride 1 or 2.
/// Weight layout [out][in][kz][ky][kx].
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t parameter_count() const noexcept { return weight.size() + bias.size(); }
  Dims3 output_dims(const Dims3& in) const noexcept;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

void conv3d_forward(const Tensor& in, const ConvLayer& layer, Tensor& out);

/// Accumulates weight and bias gradients into `grad_layer` and, when
/// `grad_in` is non-null, writes the input gradient there (overwriting).
void conv3d_backward(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                     ConvLayer& grad_layer, Tensor* grad_in);

namespace detail {
/// Direct loop implementations; the public entry points dispatch 3x3x3
/// stride-1 layers to blocked kernels instead.
void conv3d_forward_reference(const Tensor& in, const ConvLayer& layer, Tensor& out);
void conv3d_backward_reference(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                               ConvLayer& grad_layer, Tensor* grad_in);
}  // namespace detail

void leaky_relu_inplace(Tensor& t, double slope);
/// grad *= (y > 0 ? 1 : slope), using the activation output y.
void leaky_relu_backward(const Tensor& y, double slope, Tensor& grad);

Tensor avg_pool2(const Tensor& in);
Tensor avg_pool2_backward(const Tensor& grad_out, const Dims3& in_dims);
Tensor upsample_nearest2(const Tensor& in);
Tensor upsample_nearest2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);

}  // namespace segae
