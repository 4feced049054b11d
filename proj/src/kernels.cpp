#include "graspfs/kernels.hpp"

#include <algorithm>
#include <cstddef>

#include "graspfs/errors.hpp"

namespace graspfs {

std::size_t window_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                                 std::size_t padding, const char* axis) {
  if (stride == 0) throw ConfigError(std::string("stride must be >= 1 (") + axis + ")");
  if (kernel == 0) throw ConfigError(std::string("kernel extent must be >= 1 (") + axis + ")");
  if (input + 2 * padding < kernel) {
    throw ConfigError(std::string("window of ") + std::to_string(kernel) + " does not fit " +
                      axis + " extent " + std::to_string(input) + " with padding " +
                      std::to_string(padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& weights, const Shape& bias,
                          std::size_t stride, std::size_t padding) {
  if (input.size() != 3) throw ConfigError("conv input must be rank 3, got " + shape_string(input));
  if (weights.size() != 4) {
    throw ConfigError("conv weights must be rank 4, got " + shape_string(weights));
  }
  if (weights[1] != input[0]) {
    throw ConfigError("conv in_channels mismatch: weights expect " + std::to_string(weights[1]) +
                      ", input has " + std::to_string(input[0]));
  }
  if (weights[2] != weights[3]) {
    throw ConfigError("conv kernel must be square, got " + shape_string(weights));
  }
  if (bias.size() != 1 || bias[0] != weights[0]) {
    throw ConfigError("conv bias must have out_channels=" + std::to_string(weights[0]) +
                      " entries, got " + shape_string(bias));
  }
  return {weights[0], window_output_extent(input[1], weights[2], stride, padding, "height"),
          window_output_extent(input[2], weights[3], stride, padding, "width")};
}

namespace {

using Index = std::ptrdiff_t;

// Range [lo, hi) of output columns whose input column ox*stride+k-pad lies in [0, width).
void valid_columns(Index width, Index out_width, Index k, Index stride, Index pad, Index& lo,
                   Index& hi) {
  lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  const Index last = width - 1 - k + pad;
  hi = last < 0 ? 0 : std::min(out_width, last / stride + 1);
  if (hi < lo) hi = lo;
}

void check_pool_shapes(const Tensor& input, std::size_t window) {
  if (input.rank() != 3) {
    throw ConfigError("maxpool input must be rank 3, got " + shape_string(input.shape()));
  }
  if (window == 0) throw ConfigError("maxpool window must be >= 1");
}

}  // namespace

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias,
                      std::size_t stride, std::size_t padding) {
  Tensor out(conv2d_output_shape(input.shape(), weights.shape(), bias.shape(), stride, padding));
  const Index cin = static_cast<Index>(input.dim(0));
  const Index h = static_cast<Index>(input.dim(1));
  const Index w = static_cast<Index>(input.dim(2));
  const Index cout = static_cast<Index>(out.dim(0));
  const Index ho = static_cast<Index>(out.dim(1));
  const Index wo = static_cast<Index>(out.dim(2));
  const Index k = static_cast<Index>(weights.dim(2));
  const Index s = static_cast<Index>(stride);
  const Index p = static_cast<Index>(padding);
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  double* o = out.data().data();

#pragma omp parallel for schedule(static)
  for (Index oc = 0; oc < cout; ++oc) {
    double* plane = o + oc * ho * wo;
    std::fill(plane, plane + ho * wo, bias[static_cast<std::size_t>(oc)]);
    for (Index ic = 0; ic < cin; ++ic) {
      const double* in_plane = in + ic * h * w;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const double wv = wt[((oc * cin + ic) * k + ky) * k + kx];
          Index lo = 0, hi = 0;
          valid_columns(w, wo, kx, s, p, lo, hi);
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            const double* irow = in_plane + iy * w;
            const Index off = kx - p;
            double* orow = plane + oy * wo;
            if (s == 1) {
              for (Index ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox + off];
            } else {
              for (Index ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox * s + off];
            }
          }
        }
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
  const Index cin = static_cast<Index>(input_shape[0]);
  const Index h = static_cast<Index>(input_shape[1]);
  const Index w = static_cast<Index>(input_shape[2]);
  const Index cout = static_cast<Index>(expected[0]);
  const Index ho = static_cast<Index>(expected[1]);
  const Index wo = static_cast<Index>(expected[2]);
  const Index k = static_cast<Index>(weights.dim(2));
  const Index s = static_cast<Index>(stride);
  const Index p = static_cast<Index>(padding);
  const double* g = grad_output.data().data();
  const double* wt = weights.data().data();
  double* gi = grad_in.data().data();

#pragma omp parallel for schedule(static)
  for (Index ic = 0; ic < cin; ++ic) {
    double* plane = gi + ic * h * w;
    for (Index oc = 0; oc < cout; ++oc) {
      const double* gplane = g + oc * ho * wo;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          const double wv = wt[((oc * cin + ic) * k + ky) * k + kx];
          Index lo = 0, hi = 0;
          valid_columns(w, wo, kx, s, p, lo, hi);
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            double* irow = plane + iy * w;
            const Index off = kx - p;
            const double* grow = gplane + oy * wo;
            if (s == 1) {
              for (Index ox = lo; ox < hi; ++ox) irow[ox + off] += wv * grow[ox];
            } else {
              for (Index ox = lo; ox < hi; ++ox) irow[ox * s + off] += wv * grow[ox];
            }
          }
        }
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
  const Index cin = static_cast<Index>(input.dim(0));
  const Index h = static_cast<Index>(input.dim(1));
  const Index w = static_cast<Index>(input.dim(2));
  const Index cout = static_cast<Index>(expected[0]);
  const Index ho = static_cast<Index>(expected[1]);
  const Index wo = static_cast<Index>(expected[2]);
  const Index k = static_cast<Index>(grad_weights.dim(2));
  const Index s = static_cast<Index>(stride);
  const Index p = static_cast<Index>(padding);
  const double* in = input.data().data();
  const double* g = grad_output.data().data();
  double* gw = grad_weights.data().data();
  double* gb = grad_bias.data().data();

#pragma omp parallel for schedule(static)
  for (Index oc = 0; oc < cout; ++oc) {
    const double* gplane = g + oc * ho * wo;
    double bsum = 0.0;
    for (Index i = 0; i < ho * wo; ++i) bsum += gplane[i];
    gb[oc] += bsum;
    for (Index ic = 0; ic < cin; ++ic) {
      const double* in_plane = in + ic * h * w;
      for (Index ky = 0; ky < k; ++ky) {
        for (Index kx = 0; kx < k; ++kx) {
          Index lo = 0, hi = 0;
          valid_columns(w, wo, kx, s, p, lo, hi);
          double acc = 0.0;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index iy = oy * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            const double* irow = in_plane + iy * w;
            const Index off = kx - p;
            const double* grow = gplane + oy * wo;
            if (s == 1) {
              for (Index ox = lo; ox < hi; ++ox) acc += grow[ox] * irow[ox + off];
            } else {
              for (Index ox = lo; ox < hi; ++ox) acc += grow[ox] * irow[ox * s + off];
            }
          }
          gw[((oc * cin + ic) * k + ky) * k + kx] += acc;
        }
      }
    }
  }
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  const auto in = input.data();
  auto o = out.data();
  const Index n = static_cast<Index>(in.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& forward_input, const Tensor& grad_output) {
  require_same_shape(forward_input, grad_output, "relu backward");
  Tensor out(grad_output.shape());
  const auto f = forward_input.data();
  const auto r = grad_output.data();
  auto o = out.data();
  const Index n = static_cast<Index>(f.size());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < n; ++i) o[i] = f[i] > 0.0 ? r[i] : 0.0;
  return out;
}

Tensor guided_relu_backward(const Tensor& forward_input, const Tensor& grad_output) {
  require_same_shape(forward_input, grad_output, "guided relu backward");
  Tensor out(grad_output.shape());
  const auto f = forward_input.data();
  const auto r = grad_output.data();
  auto o = out.data();
  const Index n = static_cast<Index>(f.size());
#pragma omp parallel for simd schedule(static)
  for (Index i = 0; i < n; ++i) o[i] = ((f[i] > 0.0) & (r[i] > 0.0)) ? r[i] : 0.0;
  return out;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
  check_pool_shapes(input, window);
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = window_output_extent(h, window, stride, 0, "height");
  const std::size_t wo = window_output_extent(w, window, stride, 0, "width");
  PoolResult result{Tensor({c, ho, wo}), std::vector<std::uint32_t>(c * ho * wo)};
  const double* in = input.data().data();
  double* out = result.output.data().data();
  std::uint32_t* arg = result.argmax.data();

#pragma omp parallel for schedule(static)
  for (Index ch = 0; ch < static_cast<Index>(c); ++ch) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (ch * h + oy * stride) * w + ox * stride;
        for (std::size_t dy = 0; dy < window; ++dy) {
          const std::size_t row = (ch * h + oy * stride + dy) * w + ox * stride;
          for (std::size_t dx = 0; dx < window; ++dx) {
            if (in[row + dx] > in[best]) best = row + dx;
          }
        }
        const std::size_t o = (ch * ho + oy) * wo + ox;
        out[o] = in[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return result;
}

Tensor maxpool_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& argmax,
                        const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw ConfigError("maxpool backward: argmax has " + std::to_string(argmax.size()) +
                      " entries, grad_output has " + std::to_string(grad_output.size()));
  }
  Tensor grad_in(input_shape);
  const std::size_t c = grad_output.dim(0);
  const std::size_t per_channel = grad_output.size() / c;
  const double* g = grad_output.data().data();
  double* gi = grad_in.data().data();
  // Windows of one channel only route into that channel's plane.
#pragma omp parallel for schedule(static)
  for (Index ch = 0; ch < static_cast<Index>(c); ++ch) {
    for (std::size_t i = ch * per_channel; i < (ch + 1) * per_channel; ++i) gi[argmax[i]] += g[i];
  }
  return grad_in;
}

}  // namespace kernels
}  // namespace graspfs
