#pragma once

// OpenMP-parallel dense kernels behind the layer operations.
//
// Every kernel parallelises over an axis whose elements are written by
// exactly one thread, and each output element accumulates its terms in a
// fixed order, so results are bit-identical for any thread count.
// graspfs::reference (reference_kernels.hpp) holds serial versions of the same
// kernels, written in the direct textbook form, used as test oracles and as the
// benchmark baseline.

#include <cstdint>
#include <vector>

#include "graspfs/tensor.hpp"

namespace graspfs {

// Output extent of a strided, zero-padded window; throws ConfigError naming
// `axis` when the window does not fit.
std::size_t window_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                                 std::size_t padding, const char* axis);

// Validates conv operand shapes and returns the output shape.
Shape conv2d_output_shape(const Shape& input, const Shape& weights, const Shape& bias,
                          std::size_t stride, std::size_t padding);

struct PoolResult {
  Tensor output;
  // Flat index into the input for every output element.
  std::vector<std::uint32_t> argmax;
};

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, std::size_t padding);

// Gradient with respect to the conv input.
Tensor conv2d_backward_input(const Tensor& grad_output, const Tensor& weights,
                             const Shape& input_shape, std::size_t stride, std::size_t padding);

// Accumulates weight and bias gradients into grad_weights / grad_bias.
void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, std::size_t stride,
                            std::size_t padding, Tensor& grad_weights, Tensor& grad_bias);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& forward_input, const Tensor& grad_output);
Tensor guided_relu_backward(const Tensor& forward_input, const Tensor& grad_output);

// Max pool; ties resolve to the first index in row-major window order.
PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride);
Tensor maxpool_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& argmax,
                        const Shape& input_shape);

}  // namespace kernels
}  // namespace graspfs
