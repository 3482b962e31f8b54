// Register-blocked kernels for 3x3x3 stride-1 convolutions.
#pragma once

#include "segae/tensor.hpp"

namespace segae::kernels {

bool fast_path_applies(const ConvLayer& layer);

void conv3x3_forward(const Tensor& in, const ConvLayer& layer, Tensor& out);

/// Adds weight and bias gradients to `grad_layer`; overwrites `grad_in` when non-null.
void conv3x3_backward(const Tensor& in, const ConvLayer& layer, const Tensor& grad_out,
                      ConvLayer& grad_layer, Tensor* grad_in);

}  // namespace segae::kernels
