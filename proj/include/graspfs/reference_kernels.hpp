#pragma once

// Serial reference kernels. Same contracts as graspfs::kernels; kept for tests
// and benchmarks only.

#include "graspfs/kernels.hpp"

namespace graspfs::reference {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, std::size_t padding);
Tensor conv2d_backward_input(const Tensor& grad_output, const Tensor& weights,
                             const Shape& input_shape, std::size_t stride, std::size_t padding);
void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, std::size_t stride,
                            std::size_t padding, Tensor& grad_weights, Tensor& grad_bias);
Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& forward_input, const Tensor& grad_output);
Tensor guided_relu_backward(const Tensor& forward_input, const Tensor& grad_output);
PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride);
Tensor maxpool_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& argmax,
                        const Shape& input_shape);

}  // namespace graspfs::reference
