#include <gtest/gtest.h>

#include <cmath>

#include "graspfs/errors.hpp"
#include "graspfs/kernels.hpp"
#include "graspfs/reference_kernels.hpp"
#include "graspfs/rng.hpp"

using namespace graspfs;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

// Direct nested-loop convolution with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t oc = w.dim(0), ic = w.dim(1), k = w.dim(2);
  const std::size_t oh = (x.dim(1) + 2 * pad - k) / stride + 1, ow = (x.dim(2) + 2 * pad - k) / stride + 1;
  Tensor out({oc, oh, ow});
  for (std::size_t o = 0; o < oc; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double s = b[o];
        for (std::size_t i = 0; i < ic; ++i)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(x.dim(1)) || ix >= static_cast<long>(x.dim(2))) continue;
              s += w.at(o, i, ky, kx) * x.at(i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
        out.at(o, y, xx) = s;
      }
  return out;
}

}  // namespace

TEST(Conv, HandExample) {
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 2, 2}, 1.0);
  Tensor b({1});
  const Tensor y = kernels::conv2d_forward(x, w, b, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(y.values(), (std::vector<double>{12, 16, 24, 28}));
}

TEST(Conv, IdentityKernel) {
  Rng rng(1);
  const Tensor x = random_tensor({1, 5, 4}, rng);
  const Tensor y = kernels::conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1, 0);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv, ZeroInputGivesBias) {
  Rng rng(2);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b({3}, {0.5, -1.0, 2.0});
  const Tensor y = kernels::conv2d_forward(Tensor({2, 6, 6}), w, b, 1, 1);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 36; ++i) EXPECT_EQ(y[c * 36 + i], b[c]);
}

TEST(Conv, MatchesNaiveLoops) {
  Rng rng(3);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 2u}) {
      const Tensor x = random_tensor({3, 9, 7}, rng);
      const Tensor w = random_tensor({4, 3, 3, 3}, rng);
      const Tensor b = random_tensor({4}, rng);
      const Tensor y = kernels::conv2d_forward(x, w, b, stride, pad);
      const Tensor ref = naive_conv(x, w, b, stride, pad);
      ASSERT_EQ(y.shape(), ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
  }
}

TEST(Conv, RejectsBadShapes) {
  EXPECT_THROW(kernels::conv2d_forward(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0), ConfigError);
  EXPECT_THROW(kernels::conv2d_forward(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), 1, 0), ConfigError);
  EXPECT_THROW(kernels::conv2d_forward(Tensor({1, 4, 4}), Tensor({1, 1, 3, 3}), Tensor({2}), 1, 0), ConfigError);
}

TEST(Conv, WeightGradientIsSumOfPatches) {
  // loss = sum of outputs, so dL/dw[ky,kx] = sum of the input values each tap sees
  Tensor x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor gw({1, 1, 2, 2}), gb({1});
  kernels::conv2d_backward_params(x, Tensor({1, 2, 2}, 1.0), 1, 0, gw, gb);
  EXPECT_EQ(gw.values(), (std::vector<double>{1 + 2 + 4 + 5, 2 + 3 + 5 + 6, 4 + 5 + 7 + 8, 5 + 6 + 8 + 9}));
  EXPECT_EQ(gb[0], 4.0);
}

TEST(Conv, ZeroUpstreamGradientGivesZeroGrads) {
  Rng rng(4);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor gw({3, 2, 3, 3}), gb({3});
  kernels::conv2d_backward_params(x, Tensor({3, 5, 5}), 1, 1, gw, gb);
  EXPECT_EQ(gw.abs_sum(), 0.0);
  EXPECT_EQ(gb.abs_sum(), 0.0);
  EXPECT_EQ(kernels::conv2d_backward_input(Tensor({3, 5, 5}), w, x.shape(), 1, 1).abs_sum(), 0.0);
}

TEST(Relu, Examples) {
  EXPECT_EQ(kernels::relu_forward(Tensor({3}, {-1, 0, 2})).values(), (std::vector<double>{0, 0, 2}));
  EXPECT_EQ(kernels::relu_forward(Tensor({2}, {-3, -0.5})).abs_sum(), 0.0);
  EXPECT_EQ(kernels::relu_forward(Tensor({2}, {0, 4})).values(), (std::vector<double>{0, 4}));
}

TEST(Relu, GuidedRuleSignGrid) {
  const double vals[] = {-1.5, 0.0, 2.0};
  for (double f : vals) {
    for (double r : vals) {
      const double expected = (f > 0 && r > 0) ? r : 0.0;
      const Tensor g = kernels::guided_relu_backward(Tensor({1}, {f}), Tensor({1}, {r}));
      EXPECT_EQ(g[0], expected) << "f=" << f << " R=" << r;
      EXPECT_FALSE(std::signbit(g[0])) << "f=" << f << " R=" << r;
    }
  }
  EXPECT_EQ(kernels::guided_relu_backward(Tensor({1}, {2.0}), Tensor({1}, {5.0}))[0], 5.0);
  EXPECT_EQ(kernels::guided_relu_backward(Tensor({1}, {-1.0}), Tensor({1}, {5.0}))[0], 0.0);
  EXPECT_EQ(kernels::guided_relu_backward(Tensor({1}, {2.0}), Tensor({1}, {-3.0}))[0], 0.0);
}

TEST(MaxPool, FirstIndexWinsTies) {
  Tensor x({1, 2, 2}, {3, 3, 3, 3});
  const PoolResult p = kernels::maxpool_forward(x, 2, 2);
  EXPECT_EQ(p.output[0], 3.0);
  EXPECT_EQ(p.argmax[0], 0u);
  const Tensor g = kernels::maxpool_backward(Tensor({1, 1, 1}, 1.0), p.argmax, x.shape());
  EXPECT_EQ(g.values(), (std::vector<double>{1, 0, 0, 0}));
}

// The parallel kernels promise bit-identical output to the serial reference.
TEST(KernelsVsReference, BitIdentical) {
  Rng rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t ic = 1 + rng.below(4), oc = 1 + rng.below(5);
    const std::size_t h = 6 + rng.below(10), w = 6 + rng.below(10);
    const std::size_t k = 1 + 2 * rng.below(2), stride = 1 + rng.below(2), pad = rng.below(2);
    const Tensor x = random_tensor({ic, h, w}, rng);
    const Tensor wt = random_tensor({oc, ic, k, k}, rng);
    const Tensor b = random_tensor({oc}, rng);

    const Tensor y = kernels::conv2d_forward(x, wt, b, stride, pad);
    EXPECT_EQ(y, reference::conv2d_forward(x, wt, b, stride, pad));

    const Tensor gy = random_tensor(y.shape(), rng);
    EXPECT_EQ(kernels::conv2d_backward_input(gy, wt, x.shape(), stride, pad),
              reference::conv2d_backward_input(gy, wt, x.shape(), stride, pad));

    Tensor gw1(wt.shape()), gb1(b.shape()), gw2(wt.shape()), gb2(b.shape());
    kernels::conv2d_backward_params(x, gy, stride, pad, gw1, gb1);
    reference::conv2d_backward_params(x, gy, stride, pad, gw2, gb2);
    EXPECT_EQ(gw1, gw2);
    EXPECT_EQ(gb1, gb2);

    const Tensor g = random_tensor(x.shape(), rng);
    EXPECT_EQ(kernels::relu_forward(x), reference::relu_forward(x));
    EXPECT_EQ(kernels::relu_backward(x, g), reference::relu_backward(x, g));
    EXPECT_EQ(kernels::guided_relu_backward(x, g), reference::guided_relu_backward(x, g));

    const PoolResult p1 = kernels::maxpool_forward(x, 2, 2);
    const PoolResult p2 = reference::maxpool_forward(x, 2, 2);
    EXPECT_EQ(p1.output, p2.output);
    EXPECT_EQ(p1.argmax, p2.argmax);
    const Tensor gp = random_tensor(p1.output.shape(), rng);
    EXPECT_EQ(kernels::maxpool_backward(gp, p1.argmax, x.shape()),
              reference::maxpool_backward(gp, p2.argmax, x.shape()));
  }
}
