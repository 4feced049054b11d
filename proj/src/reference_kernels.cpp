#include "graspfs/reference_kernels.hpp"

#include "graspfs/errors.hpp"

namespace graspfs::reference {

namespace {
using Index = std::ptrdiff_t;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, std::size_t padding) {
  Tensor out(conv2d_output_shape(input.shape(), weights.shape(), bias.shape(), stride, padding));
  const Index h = static_cast<Index>(input.dim(1)), w = static_cast<Index>(input.dim(2));
  const Index k = static_cast<Index>(weights.dim(2));
  const Index s = static_cast<Index>(stride), p = static_cast<Index>(padding);
  for (std::size_t oc = 0; oc < out.dim(0); ++oc) {
    for (std::size_t oy = 0; oy < out.dim(1); ++oy) {
      for (std::size_t ox = 0; ox < out.dim(2); ++ox) {
        double acc = bias[oc];
        for (std::size_t ic = 0; ic < input.dim(0); ++ic) {
          for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
              const Index iy = static_cast<Index>(oy) * s + ky - p;
              const Index ix = static_cast<Index>(ox) * s + kx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += weights.at(oc, ic, ky, kx) * input.at(ic, iy, ix);
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return out;
}

Tensor conv2d_backward_input(const Tensor& grad_output, const Tensor& weights,
                             const Shape& input_shape, std::size_t stride, std::size_t padding) {
  const Shape expected = conv2d_output_shape(input_shape, weights.shape(), {weights.dim(0)},
                                             stride, padding);
  if (grad_output.shape() != expected) {
    throw ConfigError("conv backward: grad_output shape " + shape_string(grad_output.shape()) +
                      " does not match forward output " + shape_string(expected));
  }
  Tensor grad_in(input_shape);
  const Index ho = static_cast<Index>(expected[1]), wo = static_cast<Index>(expected[2]);
  const Index k = static_cast<Index>(weights.dim(2));
  const Index s = static_cast<Index>(stride), p = static_cast<Index>(padding);
  for (std::size_t ic = 0; ic < input_shape[0]; ++ic) {
    for (Index iy = 0; iy < static_cast<Index>(input_shape[1]); ++iy) {
      for (Index ix = 0; ix < static_cast<Index>(input_shape[2]); ++ix) {
        double acc = 0.0;
        for (std::size_t oc = 0; oc < expected[0]; ++oc) {
          for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
              const Index ny = iy + p - ky, nx = ix + p - kx;
              if (ny < 0 || nx < 0 || ny % s != 0 || nx % s != 0) continue;
              const Index oy = ny / s, ox = nx / s;
              if (oy >= ho || ox >= wo) continue;
              acc += weights.at(oc, ic, ky, kx) * grad_output.at(oc, oy, ox);
            }
          }
        }
        grad_in.at(ic, iy, ix) = acc;
      }
    }
  }
  return grad_in;
}

void conv2d_backward_params(const Tensor& input, const Tensor& grad_output, std::size_t stride,
                            std::size_t padding, Tensor& grad_weights, Tensor& grad_bias) {
  const Shape expected = conv2d_output_shape(input.shape(), grad_weights.shape(),
                                             grad_bias.shape(), stride, padding);
  if (grad_output.shape() != expected) {
    throw ConfigError("conv backward: grad_output shape " + shape_string(grad_output.shape()) +
                      " does not match forward output " + shape_string(expected));
  }
  const Index h = static_cast<Index>(input.dim(1)), w = static_cast<Index>(input.dim(2));
  const Index s = static_cast<Index>(stride), p = static_cast<Index>(padding);
  for (std::size_t oc = 0; oc < expected[0]; ++oc) {
    double bsum = 0.0;
    for (std::size_t oy = 0; oy < expected[1]; ++oy) {
      for (std::size_t ox = 0; ox < expected[2]; ++ox) bsum += grad_output.at(oc, oy, ox);
    }
    grad_bias[oc] += bsum;
    for (std::size_t ic = 0; ic < input.dim(0); ++ic) {
      for (Index ky = 0; ky < static_cast<Index>(grad_weights.dim(2)); ++ky) {
        for (Index kx = 0; kx < static_cast<Index>(grad_weights.dim(3)); ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < expected[1]; ++oy) {
            for (std::size_t ox = 0; ox < expected[2]; ++ox) {
              const Index iy = static_cast<Index>(oy) * s + ky - p;
              const Index ix = static_cast<Index>(ox) * s + kx - p;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += grad_output.at(oc, oy, ox) * input.at(ic, iy, ix);
            }
          }
          grad_weights.at(oc, ic, ky, kx) += acc;
        }
      }
    }
  }
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& forward_input, const Tensor& grad_output) {
  require_same_shape(forward_input, grad_output, "relu backward");
  Tensor out(grad_output.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = forward_input[i] > 0.0 ? grad_output[i] : 0.0;
  }
  return out;
}

Tensor guided_relu_backward(const Tensor& forward_input, const Tensor& grad_output) {
  require_same_shape(forward_input, grad_output, "guided relu backward");
  Tensor out(grad_output.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool forward_mask = forward_input[i] > 0.0;
    const bool gradient_mask = grad_output[i] > 0.0;
    out[i] = (forward_mask && gradient_mask) ? grad_output[i] : 0.0;
  }
  return out;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
  if (input.rank() != 3) {
    throw ConfigError("maxpool input must be rank 3, got " + shape_string(input.shape()));
  }
  const std::size_t ho = window_output_extent(input.dim(1), window, stride, 0, "height");
  const std::size_t wo = window_output_extent(input.dim(2), window, stride, 0, "width");
  PoolResult result{Tensor({input.dim(0), ho, wo}), {}};
  for (std::size_t c = 0; c < input.dim(0); ++c) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t by = oy * stride, bx = ox * stride;
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            if (input.at(c, oy * stride + dy, ox * stride + dx) > input.at(c, by, bx)) {
              by = oy * stride + dy;
              bx = ox * stride + dx;
            }
          }
        }
        result.output.at(c, oy, ox) = input.at(c, by, bx);
        result.argmax.push_back(
            static_cast<std::uint32_t>((c * input.dim(1) + by) * input.dim(2) + bx));
      }
    }
  }
  return result;
}

Tensor maxpool_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& argmax,
                        const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw ConfigError("maxpool backward: argmax/grad_output size mismatch");
  }
  Tensor grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_output[i];
  return grad_in;
}

}  // namespace graspfs::reference
